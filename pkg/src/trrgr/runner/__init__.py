from .backends import CachedTool, HttpModel, ScriptedModel, SimulatedTool, build_script
from .config import RunConfig
from .dataset import Sample, load_dataset, synthetic_dataset, write_dataset
from .prompts import render_piter_prompt
from .protocols import SampleResult, evaluate, load_results, run_piter, run_trrgr
from .rollouts import compute_rollout_rewards

__all__ = [
    "CachedTool",
    "HttpModel",
    "RunConfig",
    "Sample",
    "SampleResult",
    "ScriptedModel",
    "SimulatedTool",
    "build_script",
    "compute_rollout_rewards",
    "evaluate",
    "load_dataset",
    "load_results",
    "render_piter_prompt",
    "run_piter",
    "run_trrgr",
    "synthetic_dataset",
    "write_dataset",
]
