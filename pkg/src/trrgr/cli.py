"""Command-line entry point: ``trrgr <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import HarnessError
from .metrics import MetricsConfig, build_report, report_to_json_text
from .rewards import RewardConfig
from .runner import backends, prompts
from .runner.config import PROTOCOLS, RunConfig
from .runner.dataset import load_dataset, synthetic_dataset, write_dataset
from .runner.protocols import evaluate, load_results, make_model, make_tool
from .runner.rollouts import compute_rollout_rewards
from .toolsim import PRESETS, load_cache, preset, simulate, write_cache

log = logging.getLogger("trrgr")


def _cmd_eval(args: argparse.Namespace) -> int:
    config = RunConfig.load(args.config) if args.config else RunConfig()
    metrics = config.metrics
    if args.tau is not None or args.epsilon is not None:
        metrics = MetricsConfig(
            tau=args.tau if args.tau is not None else metrics.tau,
            epsilon=args.epsilon if args.epsilon is not None else metrics.epsilon,
        )
    config = config.updated(
        protocol=args.protocol,
        model_backend=args.model,
        tool_backend=args.tool,
        output_dir=args.out,
        parallelism=args.parallelism,
        tool_seed=args.seed,
        metrics=metrics,
    )
    if not config.model_backend or not config.tool_backend:
        raise SystemExit("eval: --model and --tool are required (or set them in --config)")
    samples = load_dataset(args.dataset)
    model_kwargs = {"model": args.model_name} if config.model_backend.startswith("http:") else {}
    model = make_model(config.model_backend, **model_kwargs)
    tool = make_tool(config.tool_backend, config.tool_seed)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(config.to_json(), indent=2) + "\n", encoding="utf-8")
    report = evaluate(samples, config, model, tool, out)
    sys.stdout.write(report_to_json_text(report))
    return 0


def _cmd_metrics(args: argparse.Namespace) -> int:
    cfg = MetricsConfig(tau=args.tau, epsilon=args.epsilon)
    report = build_report((r.outcome for r in load_results(args.results)), cfg)
    sys.stdout.write(report.to_csv(args.label) if args.csv else report_to_json_text(report))
    return 0


def _cmd_simulate_tool(args: argparse.Namespace) -> int:
    profile = preset(args.preset, args.seed)
    samples = load_dataset(args.dataset)
    preds = [simulate(s.gt_bbox, s.width, s.height, profile, s.sample_id) for s in samples]
    write_cache(preds, args.out)
    log.info("wrote %d tool predictions to %s", len(preds), args.out)
    return 0


def _cmd_rewards(args: argparse.Namespace) -> int:
    samples = {s.sample_id: s for s in load_dataset(args.dataset)}
    cfg = RewardConfig(
        threshold=args.threshold,
        gate_on_format=not args.no_gate,
        include_iou_baseline=args.iou_baseline,
    )
    groups = compute_rollout_rewards(args.trajectories, samples, cfg, args.out, args.group_size)
    log.info("scored %d groups into %s", len(groups), args.out)
    return 0


def _cmd_render_prompt(args: argparse.Namespace) -> int:
    template = Path(args.template).read_text(encoding="utf-8") if args.template else prompts.DEFAULT_PITER_TEMPLATE
    prompts.check_template(template)
    preds = load_cache(args.tool)
    for s in load_dataset(args.dataset):
        if args.sample_id and s.sample_id != args.sample_id:
            continue
        sys.stdout.write(f"### {s.sample_id}\n")
        sys.stdout.write(prompts.render_piter_prompt(template, s.expression, preds.get(s.sample_id)) + "\n")
    return 0


def _cmd_script(args: argparse.Namespace) -> int:
    samples = load_dataset(args.dataset)
    preds = load_cache(args.tool) if args.tool else {}
    records = backends.build_script(samples, preds, args.policy, args.protocol, args.seed)
    backends.write_script(records, args.out)
    return 0


def _cmd_synth(args: argparse.Namespace) -> int:
    write_dataset(synthetic_dataset(args.n, args.seed), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="trrgr", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("eval", help="run a protocol over a dataset and report metrics")
    e.add_argument("--protocol", choices=PROTOCOLS)
    e.add_argument("--dataset", required=True)
    e.add_argument("--tool", help="cache:PATH or sim:PRESET")
    e.add_argument("--model", help="http:URL or scripted:PATH")
    e.add_argument("--model-name", default="default", help="model field sent to HTTP backends")
    e.add_argument("--out")
    e.add_argument("--config", help="RunConfig JSON; flags override it")
    e.add_argument("--parallelism", type=int)
    e.add_argument("--seed", type=int, help="seed for simulated tools")
    e.add_argument("--tau", type=float)
    e.add_argument("--epsilon", type=float)
    e.set_defaults(func=_cmd_eval)

    m = sub.add_parser("metrics", help="recompute the report from a results file")
    m.add_argument("--results", required=True)
    m.add_argument("--tau", type=float, default=0.5)
    m.add_argument("--epsilon", type=float, default=0.05)
    m.add_argument("--csv", action="store_true")
    m.add_argument("--label")
    m.set_defaults(func=_cmd_metrics)

    s = sub.add_parser("simulate-tool", help="write simulated tool predictions as a cache file")
    s.add_argument("--dataset", required=True)
    s.add_argument("--preset", required=True, choices=sorted(PRESETS))
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_simulate_tool)

    r = sub.add_parser("rewards", help="score rollout groups and compute advantages")
    r.add_argument("--trajectories", required=True)
    r.add_argument("--dataset", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--group-size", type=int)
    r.add_argument("--threshold", type=float, default=0.5)
    r.add_argument("--no-gate", action="store_true", help="do not zero the total on format failure")
    r.add_argument("--iou-baseline", action="store_true", help="add the dense IoU reward to the total")
    r.set_defaults(func=_cmd_rewards)

    rp = sub.add_parser("render-prompt", help="print rendered single-stage prompts")
    rp.add_argument("--dataset", required=True)
    rp.add_argument("--tool", required=True, help="tool cache JSONL")
    rp.add_argument("--template")
    rp.add_argument("--sample-id")
    rp.set_defaults(func=_cmd_render_prompt)

    sc = sub.add_parser("script", help="write a scripted-model file for a test policy")
    sc.add_argument("--dataset", required=True)
    sc.add_argument("--tool", help="tool cache JSONL (needed by echo/noisy)")
    sc.add_argument("--policy", choices=backends.POLICIES, required=True)
    sc.add_argument("--protocol", choices=PROTOCOLS, default="piter")
    sc.add_argument("--seed", type=int, default=0)
    sc.add_argument("--out", required=True)
    sc.set_defaults(func=_cmd_script)

    sy = sub.add_parser("synth-dataset", help="write a random synthetic dataset")
    sy.add_argument("--n", type=int, required=True)
    sy.add_argument("--seed", type=int, default=0)
    sy.add_argument("--out", required=True)
    sy.set_defaults(func=_cmd_synth)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (HarnessError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
