"""Command-line entry point: training, evaluation, constraint sweeps,
baseline optimization, and self tests.

Every run directory receives a manifest holding the exact configuration
snapshot, master seed, and command line, which is sufficient to reproduce
the run bit for bit. All artifacts are written atomically (temp file plus
rename) and all tabular output is CSV with a header row.

Exit codes: 0 success, 2 invalid configuration or arguments, 3 non-finite
training state.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import FAMILIES, BaselinePolicy, BaselineSpec, grid_search
from .config import (
    ConfigError,
    DEFAULT_BUDGET_LEVELS,
    DEFAULT_RISK_LEVELS,
    apply_overrides,
    env_config_from_dict,
    load_config,
    train_config_from_dict,
)
from .ddmac import AgentSet, TrainingError, train
from .env import feature_dim
from .evaluate import EvalReport, evaluate

OUTPUT_ROOT_ENV = "LCPLAN_OUT"

SUMMARY_FIELDS = [
    "policy",
    "n_episodes",
    "discount",
    "mean_total",
    "se_total",
    "mean_maintenance",
    "se_maintenance",
    "mean_inspection",
    "se_inspection",
    "mean_shutdown",
    "se_shutdown",
    "mean_risk",
    "se_risk",
    "mean_risk_return",
    "budget_violations",
]


def _output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))


def _atomic_write(path: Path, data) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    if isinstance(data, bytes):
        with open(tmp, "wb") as fh:
            fh.write(data)
    else:
        with open(tmp, "w", newline="") as fh:
            fh.write(data)
    os.replace(tmp, path)


def _write_csv(path: Path, fieldnames, rows) -> None:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fieldnames)
    writer.writeheader()
    for row in rows:
        writer.writerow(
            {k: ("" if row.get(k) is None else row.get(k, "")) for k in fieldnames}
        )
    _atomic_write(path, buf.getvalue())


def _write_manifest(outdir: Path, config: dict, seed, command, outputs, timings) -> None:
    manifest = {
        "version": __version__,
        "command": command,
        "master_seed": seed,
        "config": config,
        "outputs": outputs,
        "timings_s": timings,
    }
    _atomic_write(outdir / "manifest.json", json.dumps(manifest, indent=2, default=str))


def _train_log_rows(log):
    fieldnames = ["episode", "total", "maintenance", "inspection", "shutdown", "risk"]
    lambda_keys = sorted(k for k in (log[0] if log else {}) if k.startswith("lambda_"))
    fieldnames += lambda_keys + ["epsilon", "random_fraction"]
    return fieldnames, log


def write_report_csvs(report: EvalReport, outdir: Path, policy_name: str) -> dict:
    summary = {
        "policy": policy_name,
        "n_episodes": report.n_episodes,
        "discount": report.discount,
        "mean_total": report.mean_total,
        "se_total": report.se_total,
        "mean_maintenance": report.mean_maintenance,
        "se_maintenance": report.se_maintenance,
        "mean_inspection": report.mean_inspection,
        "se_inspection": report.se_inspection,
        "mean_shutdown": report.mean_shutdown,
        "se_shutdown": report.se_shutdown,
        "mean_risk": report.mean_risk,
        "se_risk": report.se_risk,
        "mean_risk_return": report.constraint_stats.get("mean_risk_return"),
        "budget_violations": report.constraint_stats.get("budget_violations"),
    }
    _write_csv(outdir / "summary.csv", SUMMARY_FIELDS, [summary])
    traj_rows = [
        {"step": t, "mean_system_failure_prob": p}
        for t, p in enumerate(report.failure_prob_mean)
    ]
    _write_csv(outdir / "trajectory.csv", ["step", "mean_system_failure_prob"], traj_rows)
    n, horizon, n_actions = report.action_freq.shape
    freq_rows = []
    for c in range(n):
        for t in range(horizon):
            for a in range(n_actions):
                freq_rows.append(
                    {
                        "component": c + 1,
                        "step": t,
                        "action": a,
                        "frequency": report.action_freq[c, t, a],
                    }
                )
    _write_csv(
        outdir / "action_freq.csv",
        ["component", "step", "action", "frequency"],
        freq_rows,
    )
    return summary


def _resolve_outdir(args, default_name: str) -> Path:
    if args.out:
        return Path(args.out)
    return _output_root() / default_name


def _load_configs(args, extra_overrides=None):
    config = load_config(args.config)
    overrides = dict(extra_overrides or {})
    if getattr(args, "episodes", None) is not None:
        overrides["training.episodes"] = args.episodes
    if getattr(args, "budget_cap", None) is not None:
        cycle = getattr(args, "budget_cycle", None) or 5
        config["budget"] = {"cap": args.budget_cap, "cycle_length": cycle}
    if getattr(args, "risk_cap", None) is not None:
        config["soft_constraints"] = [
            {"kind": "lifecycle_risk", "threshold": args.risk_cap}
        ]
    config = apply_overrides(config, overrides)
    return config, env_config_from_dict(config), train_config_from_dict(config)


def cmd_train(args) -> int:
    config, env_cfg, train_cfg = _load_configs(args)
    outdir = _resolve_outdir(args, f"train-seed{args.seed}")
    outdir.mkdir(parents=True, exist_ok=True)
    started = time.time()
    result = train(train_cfg, env_cfg, args.seed)
    elapsed = time.time() - started
    fieldnames, rows = _train_log_rows(result.log)
    _write_csv(outdir / "train_log.csv", fieldnames, rows)
    ckpt_tmp = outdir / "checkpoint.bin.tmp"
    result.agents.save(ckpt_tmp)
    os.replace(ckpt_tmp, outdir / "checkpoint.bin")
    outputs = ["train_log.csv", "checkpoint.bin"]
    _write_manifest(outdir, config, args.seed, sys.argv[1:], outputs, {"train": elapsed})
    print(f"trained {train_cfg.episodes} episodes -> {outdir}")
    return 0


def _policy_from_args(args, env_cfg):
    if args.checkpoint:
        agents = AgentSet.load(args.checkpoint)
        expected = feature_dim(env_cfg.n_components)
        if agents.input_dim != expected or agents.n_agents != env_cfg.n_components:
            raise ConfigError(
                f"checkpoint shape (agents={agents.n_agents}, dim={agents.input_dim}) "
                f"does not match the configured environment "
                f"(agents={env_cfg.n_components}, dim={expected})"
            )
        return agents, "ddmac"
    params = json.loads(args.baseline_params) if args.baseline_params else {}
    if "maint_map" in params:
        params["maint_map"] = tuple(params["maint_map"])
    spec = BaselineSpec(family=args.baseline, **params)
    return BaselinePolicy(spec, env_cfg), args.baseline


def cmd_evaluate(args) -> int:
    config, env_cfg, _ = _load_configs(args)
    policy, name = _policy_from_args(args, env_cfg)
    outdir = _resolve_outdir(args, f"eval-{name}-seed{args.seed}")
    outdir.mkdir(parents=True, exist_ok=True)
    started = time.time()
    report = evaluate(policy, env_cfg, args.n, args.seed)
    elapsed = time.time() - started
    write_report_csvs(report, outdir, name)
    outputs = ["summary.csv", "trajectory.csv", "action_freq.csv"]
    _write_manifest(outdir, config, args.seed, sys.argv[1:], outputs, {"evaluate": elapsed})
    print(f"evaluated {name} over {args.n} episodes -> {outdir}")
    return 0


def cmd_sweep(args) -> int:
    if args.levels:
        levels = [float(x) for x in args.levels.split(",") if x.strip()]
    else:
        levels = list(DEFAULT_BUDGET_LEVELS if args.kind == "budget" else DEFAULT_RISK_LEVELS)
    if not levels:
        raise ConfigError("sweep needs at least one level")
    outdir = _resolve_outdir(args, f"sweep-{args.kind}-seed{args.seed}")
    outdir.mkdir(parents=True, exist_ok=True)
    rows, failures = [], []
    timings = {}
    base_config = load_config(args.config)
    for level in levels:
        label = f"level_{level:g}"
        level_dir = outdir / label
        level_dir.mkdir(parents=True, exist_ok=True)
        config = dict(base_config)
        if args.kind == "budget":
            config["budget"] = {
                "cap": level,
                "cycle_length": args.budget_cycle or 5,
            }
            config["soft_constraints"] = []
        else:
            config["budget"] = None
            config["soft_constraints"] = [
                {"kind": "lifecycle_risk", "threshold": level}
            ]
        if args.episodes is not None:
            config = apply_overrides(config, {"training.episodes": args.episodes})
        try:
            env_cfg = env_config_from_dict(config)
            train_cfg = train_config_from_dict(config)
            started = time.time()
            result = train(train_cfg, env_cfg, args.seed)
            fieldnames, log_rows = _train_log_rows(result.log)
            _write_csv(level_dir / "train_log.csv", fieldnames, log_rows)
            ckpt_tmp = level_dir / "checkpoint.bin.tmp"
            result.agents.save(ckpt_tmp)
            os.replace(ckpt_tmp, level_dir / "checkpoint.bin")
            report = evaluate(result.agents, env_cfg, args.eval_episodes, args.seed)
            summary = write_report_csvs(report, level_dir, f"ddmac-{label}")
            summary["level"] = level
            rows.append(summary)
            timings[label] = time.time() - started
            _write_manifest(
                level_dir, config, args.seed, sys.argv[1:], ["train_log.csv"], timings
            )
        except (TrainingError, ConfigError) as exc:
            failures.append({"level": level, "error": str(exc)})
    _write_csv(outdir / "comparison.csv", ["level"] + SUMMARY_FIELDS, rows)
    _write_manifest(
        outdir,
        {"kind": args.kind, "levels": levels, "base": base_config, "failures": failures},
        args.seed,
        sys.argv[1:],
        ["comparison.csv"],
        timings,
    )
    print(f"swept {len(rows)}/{len(levels)} levels -> {outdir}")
    return 0 if not failures else 1


def cmd_baseline_search(args) -> int:
    config, env_cfg, _ = _load_configs(args)
    grids = json.loads(args.grid) if args.grid else None
    if grids and "maint_map" in grids:
        grids["maint_map"] = [tuple(m) for m in grids["maint_map"]]
    outdir = _resolve_outdir(args, f"baseline-{args.family}-seed{args.seed}")
    outdir.mkdir(parents=True, exist_ok=True)
    started = time.time()
    best, table = grid_search(
        args.family, env_cfg, grids, args.episodes_per_candidate, args.seed
    )
    elapsed = time.time() - started
    rows = []
    for rank, (spec, mean, se) in enumerate(table):
        rows.append(
            {
                "rank": rank,
                "family": spec.family,
                "partial_age": spec.partial_age,
                "replace_age": spec.replace_age,
                "interval": spec.interval,
                "threshold": spec.threshold,
                "maint_map": "" if spec.maint_map is None else "-".join(map(str, spec.maint_map)),
                "n_cp": spec.n_cp,
                "mean_total": mean,
                "se_total": se,
            }
        )
    _write_csv(
        outdir / "grid_search.csv",
        [
            "rank",
            "family",
            "partial_age",
            "replace_age",
            "interval",
            "threshold",
            "maint_map",
            "n_cp",
            "mean_total",
            "se_total",
        ],
        rows,
    )
    _write_manifest(
        outdir, config, args.seed, sys.argv[1:], ["grid_search.csv"], {"search": elapsed}
    )
    print(f"best {args.family}: {best} -> {outdir}")
    return 0


def cmd_selftest(args) -> int:
    from .selftest import run_selftest

    return run_selftest(verbose=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lcplan",
        description="Constrained life-cycle inspection-and-maintenance planning toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML configuration file")
        p.add_argument("--seed", type=int, default=0, help="master seed")
        p.add_argument("--out", help="output directory (default under $LCPLAN_OUT)")

    p_train = sub.add_parser("train", help="train the multi-agent policy")
    common(p_train)
    p_train.add_argument("--episodes", type=int, help="override training episodes")
    p_train.add_argument("--budget-cap", type=float, help="per-cycle budget cap")
    p_train.add_argument("--budget-cycle", type=int, help="budget cycle length (steps)")
    p_train.add_argument("--risk-cap", type=float, help="life-cycle risk constraint level")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("evaluate", help="evaluate a policy")
    common(p_eval)
    p_eval.add_argument("--checkpoint", help="trained agent checkpoint")
    p_eval.add_argument("--baseline", choices=FAMILIES, help="baseline family")
    p_eval.add_argument(
        "--baseline-params", help="JSON object of baseline decision variables"
    )
    p_eval.add_argument("-n", type=int, default=100, help="evaluation episodes")
    p_eval.add_argument("--budget-cap", type=float)
    p_eval.add_argument("--budget-cycle", type=int)
    p_eval.add_argument("--risk-cap", type=float)
    p_eval.set_defaults(func=cmd_evaluate)

    p_sweep = sub.add_parser("sweep", help="train and evaluate across constraint levels")
    common(p_sweep)
    p_sweep.add_argument("--kind", choices=("budget", "risk"), required=True)
    p_sweep.add_argument("--levels", help="comma-separated constraint levels")
    p_sweep.add_argument("--episodes", type=int, help="training episodes per level")
    p_sweep.add_argument("--eval-episodes", type=int, default=100)
    p_sweep.add_argument("--budget-cycle", type=int)
    p_sweep.set_defaults(func=cmd_sweep)

    p_search = sub.add_parser("baseline-search", help="grid-search a baseline family")
    common(p_search)
    p_search.add_argument("--family", choices=FAMILIES, required=True)
    p_search.add_argument("--episodes-per-candidate", type=int, default=30)
    p_search.add_argument("--grid", help="JSON object of per-variable grids")
    p_search.set_defaults(func=cmd_baseline_search)

    p_self = sub.add_parser("selftest", help="run the built-in oracle suites")
    p_self.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "evaluate" and bool(args.checkpoint) == bool(args.baseline):
        print("error: evaluate needs exactly one of --checkpoint or --baseline", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TrainingError as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return 3


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
