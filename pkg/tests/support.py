"""Shared builders for runner and acceptance tests."""

import json
from pathlib import Path

from trrgr.runner.backends import SimulatedTool, build_script, script_model
from trrgr.runner.dataset import Sample, synthetic_dataset
from trrgr.geometry import Box
from trrgr.toolsim import preset, simulate

GOLDEN = Path(__file__).parent / "golden"


def golden_sample() -> tuple[Sample, Box]:
    fx = json.loads((GOLDEN / "piter_fixture.json").read_text())
    s = fx["sample"]
    sample = Sample(s["sample_id"], s["image"], s["width"], s["height"], s["expression"], Box(*s["gt_bbox"]))
    return sample, Box(*fx["tool_bbox"])


def simulated_setup(n: int, policy: str, protocol: str = "piter", preset_name: str = "weak_gdt", seed: int = 0):
    """Dataset, tool, tool predictions and a scripted model for ``policy``."""
    samples = synthetic_dataset(n, seed=seed)
    profile = preset(preset_name, seed)
    preds = {s.sample_id: simulate(s.gt_bbox, s.width, s.height, profile, s.sample_id) for s in samples}
    model = script_model(build_script(samples, preds, policy, protocol, seed))
    return samples, SimulatedTool(profile), preds, model
