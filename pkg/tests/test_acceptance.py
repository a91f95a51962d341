"""One test per acceptance criterion; the summary lists PASS/FAIL per number."""

import filecmp
import math
import random
import time
from fractions import Fraction

import numpy as np
import pytest

from trrgr.geometry import Box, iou
from trrgr.grpo import group_advantages
from trrgr.metrics import SampleOutcome, aggregate_splits, build_report, nsri_gain
from trrgr.rewards import format_reward, refinement_reward
from trrgr.runner import prompts
from trrgr.runner.config import RunConfig
from trrgr.runner.protocols import evaluate, load_results
from trrgr.trace_parser import validate_trajectory

from support import GOLDEN, golden_sample, simulated_setup
from test_trace_parser import CORPUS


def rational_pixel_iou(a, b):
    grid_a = np.zeros((100, 100), dtype=bool)
    grid_b = np.zeros((100, 100), dtype=bool)
    grid_a[int(a.y1) : int(a.y2), int(a.x1) : int(a.x2)] = True
    grid_b[int(b.y1) : int(b.y2), int(b.x1) : int(b.x2)] = True
    union = int((grid_a | grid_b).sum())
    return Fraction(int((grid_a & grid_b).sum()), union) if union else Fraction(0)


def random_box(rng):
    x = sorted(rng.integers(0, 101, 2))
    y = sorted(rng.integers(0, 101, 2))
    return Box(int(x[0]), int(y[0]), int(x[1]), int(y[1]))


@pytest.mark.acceptance(1, "IoU equals pixel-count IoU on 1000 integer box pairs, under 1 s")
def test_iou_oracle_equivalence():
    rng = np.random.default_rng(20240601)
    pairs = [(random_box(rng), random_box(rng)) for _ in range(1000)]
    start = time.perf_counter()
    values = [iou(a, b) for a, b in pairs]
    elapsed = time.perf_counter() - start
    exact = [rational_pixel_iou(a, b) for a, b in pairs]
    assert all(abs(v - float(e)) <= 1e-12 for v, e in zip(values, exact))
    # the closed form is a ratio of exact integer areas, so it is the correctly rounded fraction
    assert all(v == float(e) for v, e in zip(values, exact))
    assert elapsed < 1.0


@pytest.mark.acceptance(2, "NSRI gain stays in [-1, 1] with the sign of iou_f - iou_t")
def test_nsri_range_and_sign():
    rng = np.random.default_rng(7)
    pairs = rng.random((10_000, 2)).tolist()
    # include the corners and the diagonal
    pairs += [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0], [0.5, 0.5]]
    violations = 0
    for t, f in pairs:
        g = nsri_gain(t, f)
        if not -1.0 <= g <= 1.0 or np.sign(g) != np.sign(f - t):
            violations += 1
    assert violations == 0


def tool_acc(preds, samples, tau=0.5):
    hits = sum(1 for s in samples if preds[s.sample_id].bbox is not None and iou(preds[s.sample_id].bbox, s.gt_bbox) >= tau)
    return hits / len(samples)


@pytest.mark.acceptance(3, "echo policy closure on 2000 samples with the weak preset")
def test_echo_closure(tmp_path):
    samples, tool, preds, model = simulated_setup(2000, "echo")
    r = evaluate(samples, RunConfig(), model, tool, tmp_path)
    assert r.fcr == 1.0 and r.wr == 0.0 and r.ccr == 0.0 and r.nsri_w == 0.0
    assert r.acc == tool_acc(preds, samples)


@pytest.mark.acceptance(4, "oracle policy closure on 2000 samples")
def test_oracle_closure(tmp_path):
    samples, tool, _, model = simulated_setup(2000, "oracle")
    r = evaluate(samples, RunConfig(), model, tool, tmp_path)
    assert r.acc == 1.0 and r.ccr == 1.0 and r.nsri_w == 1.0


@pytest.mark.acceptance(5, "mean refinement reward under echo equals 0.5 * tool-correct fraction")
def test_refinement_reward_expectation(tmp_path):
    samples, tool, _, model = simulated_setup(2000, "echo", protocol="trrgr")
    evaluate(samples, RunConfig(protocol="trrgr"), model, tool, tmp_path)
    results = load_results(tmp_path / "results.jsonl")
    refine = [r.rewards.refine_confirm + r.rewards.refine_correct for r in results]
    assert all(r.rewards.refine_correct == 0.0 for r in results)
    p_hat = Fraction(sum(1 for r in results if r.iou_t >= 0.5), len(results))
    assert Fraction(math.fsum(refine)) / len(results) == Fraction(1, 2) * p_hat
    # cross-check against the reward function directly
    assert all(refinement_reward(r.iou_t, r.iou_f) == (r.rewards.refine_confirm, r.rewards.refine_correct) for r in results)


@pytest.mark.acceptance(6, "GRPO advantages: zero-sum, shift invariant, zeros for equal groups")
def test_grpo_properties():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        r = rng.choice([0.0, 0.5, 1.0, 1.5, 2.0], size=8).tolist() if rng.random() < 0.5 else rng.normal(1, 1, 8).tolist()
        adv = group_advantages(r)
        assert abs(sum(adv)) <= 1e-9
        c = float(rng.uniform(-5, 5))
        shifted = group_advantages([x + c for x in r])
        if np.std(r) > 1e-6:
            assert np.max(np.abs(np.subtract(shifted, adv))) <= 1e-9
        const = [float(rng.uniform(-3, 3))] * 8
        assert group_advantages(const) == [0.0] * 8


@pytest.mark.acceptance(7, "format reward is 1 only for the valid case of the 20-case corpus")
def test_format_reward_corpus():
    assert len(CORPUS) == 20
    rewards = [format_reward(validate_trajectory(c["turn1"], c["turn2"])) for c in CORPUS]
    assert rewards == [1.0] + [0.0] * 19
    assert all(len(c["defects"]) == 1 for c in CORPUS[1:])


@pytest.mark.acceptance(8, "table split means reproduce the printed averages")
def test_table_aggregation():
    baseline_row = aggregate_splits([90.0, 92.5, 85.4, 84.2, 89.1, 76.9, 87.2, 87.2])
    refined_row = aggregate_splits([93.2, 95.0, 90.7, 88.5, 92.7, 83.0, 89.8, 90.6])
    assert abs(baseline_row - 86.6) <= 0.05
    assert abs(refined_row - 90.44) <= 0.005
    assert abs(refined_row - 90.5) <= 0.15


@pytest.mark.acceptance(9, "evaluate is byte-identical at parallelism 1 and 16 across runs")
def test_determinism(tmp_path):
    dirs = []
    for protocol in ("piter", "trrgr"):
        for par in (1, 16):
            for run in range(2):
                samples, tool, _, model = simulated_setup(400, "noisy", protocol=protocol)
                out = tmp_path / f"{protocol}-{par}-{run}"
                evaluate(samples, RunConfig(protocol=protocol, parallelism=par), model, tool, out)
                dirs.append(out)
    for group in (dirs[:4], dirs[4:]):
        for d in group[1:]:
            for name in ("results.jsonl", "report.json", "report.csv"):
                assert filecmp.cmp(group[0] / name, d / name, shallow=False), (d, name)


def brute_force_report(outcomes, tau=0.5, eps=0.05):
    n = len(outcomes)
    wrong = [o for o in outcomes if o.iou_t < tau]
    right = [o for o in outcomes if o.iou_t >= tau]
    gains = []
    for o in wrong:
        t, f = Fraction(o.iou_t), Fraction(o.iou_f)
        gains.append((f - t) / (1 - t) if f > t else (f - t) / t if f < t else Fraction(0))
    return {
        "n": n,
        "acc": sum(o.iou_f >= tau for o in outcomes) / n,
        "s_w_count": len(wrong),
        "ccr": sum(o.iou_f >= tau for o in wrong) / len(wrong) if wrong else None,
        "s_c_count": len(right),
        "fcr": sum(abs(o.iou_f - o.iou_t) < eps for o in right) / len(right) if right else None,
        "wr": sum(o.iou_f < o.iou_t for o in outcomes) / n,
        "follow_count": sum(abs(o.iou_f - o.iou_t) < eps for o in right),
        "worsen_count": sum(o.iou_f < o.iou_t for o in outcomes),
        "fixed_count": sum(o.iou_f >= tau for o in wrong),
        "nsri_w": gains,
    }


@pytest.mark.acceptance(10, "one-pass report equals brute-force recomputation on 5000 samples")
def test_streaming_equals_batch(tmp_path):
    samples, tool, _, model = simulated_setup(5000, "noisy", seed=3)
    report = evaluate(samples, RunConfig(parallelism=8), model, tool, tmp_path)
    outcomes = [SampleOutcome(r.sample_id, r.iou_t, r.iou_f) for r in load_results(tmp_path / "results.jsonl")]
    expected = brute_force_report(outcomes)
    gains = expected.pop("nsri_w")
    for key, value in expected.items():
        assert getattr(report, key) == value, key
    # each gain rounded to float, summed exactly, rounded once, then divided
    float_gains = [Fraction(float(g)) for g in gains]
    assert report.nsri_w == float(sum(float_gains, Fraction(0))) / len(gains)
    assert abs(report.nsri_w - float(sum(gains, Fraction(0)) / len(gains))) <= 1e-12
    # and the same one-pass result from a shuffled stream
    shuffled = list(outcomes)
    random.Random(0).shuffle(shuffled)
    assert build_report(shuffled) == report


@pytest.mark.acceptance(11, "default single-stage prompt matches the golden file, null box renders null")
def test_piter_prompt_golden():
    sample, tool_box = golden_sample()
    rendered = prompts.render_piter_prompt(prompts.DEFAULT_PITER_TEMPLATE, sample.expression, tool_box)
    assert rendered.encode("utf-8") == (GOLDEN / "piter_prompt.txt").read_bytes()
    null = prompts.render_piter_prompt(prompts.DEFAULT_PITER_TEMPLATE, sample.expression, None)
    assert null.encode("utf-8") == (GOLDEN / "piter_prompt_null.txt").read_bytes()
    assert "null" in null and "[96, 58.5, 291, 447]" in rendered
