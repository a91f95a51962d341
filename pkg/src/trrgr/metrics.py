"""Refinement metrics over per-sample ``(iou_t, iou_f)`` pairs.

``iou_t`` is the tool box against ground truth, ``iou_f`` the final answer
against ground truth. With threshold ``tau``:

* Acc: share of samples with ``iou_f >= tau``;
* CCR: over tool-wrong samples (``iou_t < tau``), share fixed to ``iou_f >= tau``;
* NSRI_w: mean signed relative gain over the tool-wrong samples;
* FCR: over tool-correct samples, share whose IoU moved by less than ``eps``;
* WR: share of all samples where ``iou_f < iou_t``.

Metrics over an empty subset are ``None`` rather than 0.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, fields
from typing import Any, Iterable, Mapping, Sequence

from .errors import ConfigError, EmptyInput


@dataclass(frozen=True)
class SampleOutcome:
    sample_id: str
    iou_t: float
    iou_f: float

    def __post_init__(self) -> None:
        for name in ("iou_t", "iou_f"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1] for sample {self.sample_id!r}")


@dataclass(frozen=True)
class MetricsConfig:
    tau: float = 0.5
    epsilon: float = 0.05

    def __post_init__(self) -> None:
        if not 0.0 < self.tau < 1.0:
            raise ConfigError(f"tau must lie in (0, 1), got {self.tau}")
        if self.epsilon < 0:
            raise ConfigError(f"epsilon must be non-negative, got {self.epsilon}")

    def to_json(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> "MetricsConfig":
        unknown = set(obj) - {"tau", "epsilon"}
        if unknown:
            raise ConfigError(f"unknown metrics config keys: {sorted(unknown)}")
        return cls(**obj)


@dataclass(frozen=True)
class MetricsReport:
    n: int
    acc: float
    s_w_count: int
    ccr: float | None
    nsri_w: float | None
    s_c_count: int
    fcr: float | None
    wr: float
    follow_count: int
    worsen_count: int
    fixed_count: int

    def to_json(self) -> dict[str, Any]:
        """Counts as-is, rates as percentages rounded to 4 decimals."""
        out: dict[str, Any] = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, float):
                v = round(100.0 * v, 4)
            out[f.name] = v
        return out

    def to_csv(self, label: str | None = None) -> str:
        """Header line plus one data row, same units as ``to_json``."""
        data = self.to_json()
        cols = list(data)
        if label is not None:
            cols = ["label"] + cols
            data = {"label": label, **data}
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        writer.writeheader()
        writer.writerow({k: "" if data[k] is None else data[k] for k in cols})
        return buf.getvalue()


def _require(outcomes: Sequence[SampleOutcome]) -> None:
    if not outcomes:
        raise EmptyInput("no outcomes")


def acc_at(outcomes: Sequence[SampleOutcome], tau: float = 0.5) -> float:
    _require(outcomes)
    return sum(1 for o in outcomes if o.iou_f >= tau) / len(outcomes)


def ccr(outcomes: Sequence[SampleOutcome], config: MetricsConfig = MetricsConfig()) -> float | None:
    wrong = [o for o in outcomes if o.iou_t < config.tau]
    if not wrong:
        return None
    return sum(1 for o in wrong if o.iou_f >= config.tau) / len(wrong)


def nsri_gain(iou_t: float, iou_f: float) -> float:
    """Signed IoU change, scaled by the room available in that direction."""
    if iou_f > iou_t:
        return (iou_f - iou_t) / (1.0 - iou_t)
    if iou_f < iou_t:
        return (iou_f - iou_t) / iou_t
    return 0.0


def nsri_w(outcomes: Sequence[SampleOutcome], config: MetricsConfig = MetricsConfig()) -> float | None:
    gains = [nsri_gain(o.iou_t, o.iou_f) for o in outcomes if o.iou_t < config.tau]
    if not gains:
        return None
    return math.fsum(gains) / len(gains)


def fcr(outcomes: Sequence[SampleOutcome], config: MetricsConfig = MetricsConfig()) -> float | None:
    correct = [o for o in outcomes if o.iou_t >= config.tau]
    if not correct:
        return None
    return sum(1 for o in correct if abs(o.iou_f - o.iou_t) < config.epsilon) / len(correct)


def wr(outcomes: Sequence[SampleOutcome]) -> float:
    _require(outcomes)
    return sum(1 for o in outcomes if o.iou_f < o.iou_t) / len(outcomes)


class ReportBuilder:
    """Single-pass accumulator; ``add`` outcomes in any order, then ``report``."""

    def __init__(self, config: MetricsConfig = MetricsConfig()):
        self.config = config
        self._n = 0
        self._hits = 0
        self._wrong = 0
        self._fixed = 0
        self._correct = 0
        self._follow = 0
        self._worse = 0
        self._gains: list[float] = []

    def add(self, o: SampleOutcome) -> None:
        tau = self.config.tau
        self._n += 1
        hit = o.iou_f >= tau
        self._hits += hit
        if o.iou_t < tau:
            self._wrong += 1
            self._fixed += hit
            self._gains.append(nsri_gain(o.iou_t, o.iou_f))
        else:
            self._correct += 1
            self._follow += abs(o.iou_f - o.iou_t) < self.config.epsilon
        self._worse += o.iou_f < o.iou_t

    def report(self) -> MetricsReport:
        if self._n == 0:
            raise EmptyInput("no outcomes")
        return MetricsReport(
            n=self._n,
            acc=self._hits / self._n,
            s_w_count=self._wrong,
            ccr=self._fixed / self._wrong if self._wrong else None,
            # fsum is exactly rounded, so the mean does not depend on arrival order
            nsri_w=math.fsum(self._gains) / self._wrong if self._wrong else None,
            s_c_count=self._correct,
            fcr=self._follow / self._correct if self._correct else None,
            wr=self._worse / self._n,
            follow_count=self._follow,
            worsen_count=self._worse,
            fixed_count=self._fixed,
        )


def build_report(outcomes: Iterable[SampleOutcome], config: MetricsConfig = MetricsConfig()) -> MetricsReport:
    builder = ReportBuilder(config)
    for o in outcomes:
        builder.add(o)
    return builder.report()


def aggregate_splits(split_acc: Mapping[str, float] | Sequence[float]) -> float:
    """Unweighted mean over splits."""
    values = list(split_acc.values()) if isinstance(split_acc, Mapping) else list(split_acc)
    if not values:
        raise EmptyInput("no splits")
    return math.fsum(values) / len(values)


def report_to_json_text(report: MetricsReport) -> str:
    return json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n"
