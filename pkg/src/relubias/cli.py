"""Command-line front end: relubias {gen,run,minnorm,verify,sweep,plot}."""

from __future__ import annotations

import argparse
import json
import re
import sys
from pathlib import Path

from .experiments import (
    ConfigError,
    ExperimentConfig,
    SCENARIOS,
    _clean,
    emit_plot,
    generate,
    run_experiment,
    verify_artifacts,
)
from .min_norm import InfeasibleError, min_norm_single, min_norm_two
from .spectral_data import DataError, Constants, load_dataset_json

OK, CHECK_FAILED, INPUT_ERROR = 0, 1, 2
CONSTANT_KEYS = ("C_g", "C_y", "C_alpha", "C_0", "C")


def parse_seeds(text: str) -> tuple:
    """'0,1,2' or '0-4' (inclusive) or a mix like '0-2,7'."""
    out = []
    for part in filter(None, (v.strip() for v in text.split(","))):
        m = re.fullmatch(r"(\d+)(?:-(\d+))?", part)
        if not m:
            raise ConfigError(f"bad --seeds value {text!r}")
        lo = int(m.group(1))
        out.extend(range(lo, int(m.group(2) or lo) + 1))
    if not out:
        raise ConfigError("--seeds is empty")
    return tuple(out)


def parse_constants(text: str) -> dict:
    out = {}
    for item in text.split(","):
        if not item.strip():
            continue
        key, sep, val = item.partition("=")
        key = key.strip()
        if not sep or key not in CONSTANT_KEYS:
            raise ConfigError(f"bad --constants entry {item!r}; keys are {', '.join(CONSTANT_KEYS)}")
        try:
            out[key] = float(val)
        except ValueError as exc:
            raise ConfigError(f"constant {key} is not a number: {val!r}") from exc
    # validate the combination early
    Constants(**{"C_g": out.get("C_g", 3.0), **{k: v for k, v in out.items() if k != "C_g"}})
    return out


def build_config(args, default_scenario=None) -> ExperimentConfig:
    overrides = {}
    if args.seeds:
        overrides["seeds"] = parse_seeds(args.seeds)
    if args.out:
        overrides["output_dir"] = args.out
    if args.eta is not None:
        overrides["eta"] = args.eta
    if args.max_iters is not None:
        if args.max_iters < 1:
            raise ConfigError("--max-iters must be positive")
        overrides["max_iters"] = args.max_iters
    if args.constants:
        overrides["constants"] = parse_constants(args.constants)
    if getattr(args, "d_list", None):
        overrides["d_list"] = tuple(int(v) for v in args.d_list.split(","))

    if args.config:
        cfg = ExperimentConfig.load(args.config)
        base = cfg.to_dict()
        base["labels"] = cfg.labels
        if args.scenario and args.scenario != cfg.scenario:
            raise ConfigError("--scenario disagrees with the config file")
        base.update(overrides)
        cfg = ExperimentConfig(**base)
    else:
        scenario = args.scenario or default_scenario
        if scenario is None:
            raise ConfigError("need --scenario or --config")
        cfg = ExperimentConfig.preset(scenario, **overrides)
    if args.seed_offset:
        cfg.seeds = tuple(s + args.seed_offset for s in cfg.seeds)
    return cfg


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(_clean(obj), sort_keys=True, indent=1) + "\n")


def cmd_gen(args) -> int:
    cfg = build_config(args)
    paths = generate(cfg)
    _emit({"written": [str(p) for p in paths]})
    return OK


def _run(args, default_scenario=None) -> int:
    cfg = build_config(args, default_scenario)
    manifest = run_experiment(cfg)
    _emit({"manifest": str(manifest.root / "manifest.json"), "summary": manifest.summary, "errors": len(manifest.errors)})
    return CHECK_FAILED if manifest.errors else OK


def cmd_run(args) -> int:
    return _run(args)


def cmd_sweep(args) -> int:
    return _run(args, default_scenario="single_sweep_d")


def cmd_minnorm(args) -> int:
    dataset = load_dataset_json(args.dataset)
    try:
        sol = min_norm_single(dataset, fallback=True) if args.model == "single" else min_norm_two(dataset)
    except InfeasibleError as exc:
        _emit({"error": str(exc)})
        return CHECK_FAILED
    doc = sol.to_dict()
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        sol.save(args.out)
    _emit(doc)
    return OK


def cmd_verify(args) -> int:
    traj, data, summ = args.trajectory, args.dataset, args.summary
    if args.run_dir:
        root = Path(args.run_dir)
        traj = traj or root / "trajectory.csv"
        data = data or root / "dataset.json"
        summ = summ or root / "summary.json"
    if not traj or not data:
        raise ConfigError("need --run-dir or both --trajectory and --dataset")
    signs = [int(v) for v in args.signs.split(",")] if args.signs else None
    checks = tuple(args.checks.split(",")) if args.checks else None
    kw = {"checks": checks} if checks else {}
    status, report = verify_artifacts(traj, data, summ, eta=args.eta, signs=signs, **kw)
    _emit(report)
    return status


def cmd_plot(args) -> int:
    path = emit_plot(args.aggregate, args.out)
    _emit({"svg": str(path)})
    return OK


def _common(p):
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--scenario", choices=SCENARIOS)
    p.add_argument("--seeds", help="comma list or ranges, e.g. 0,1,2 or 0-19")
    p.add_argument("--seed-offset", type=int, default=0, help="shift every seed by this amount")
    p.add_argument("--out", help="output directory")
    p.add_argument("--eta", type=float, help="step size override")
    p.add_argument("--max-iters", type=int)
    p.add_argument("--constants", help="key=val,... for C_g, C_y, C_alpha, C_0, C")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="relubias", description=__doc__)
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("gen", help="write sampled datasets")
    _common(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("run", help="run a scenario over its seeds")
    _common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="dimension sweep with aggregate CSV and SVG")
    _common(p)
    p.add_argument("--d-list", help="comma list of dimensions")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("minnorm", help="solve the min-norm program for a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--model", choices=("single", "two"), default="single")
    p.add_argument("--out")
    p.set_defaults(func=cmd_minnorm)

    p = sub.add_parser("verify", help="recheck persisted run artifacts")
    p.add_argument("--run-dir", help="seed directory with trajectory.csv, dataset.json, summary.json")
    p.add_argument("--trajectory")
    p.add_argument("--dataset")
    p.add_argument("--summary")
    p.add_argument("--eta", type=float)
    p.add_argument("--signs", help="comma list of +1/-1 when no summary is given")
    p.add_argument("--checks", help="subset of primal_dual,dual_update,frozen_dual,risk,conditions")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("plot", help="SVG from an aggregate CSV")
    p.add_argument("--aggregate", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return INPUT_ERROR if exc.code else OK
    try:
        return args.func(args)
    except (DataError, OSError) as exc:
        sys.stderr.write(f"relubias: {exc}\n")
        return INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
