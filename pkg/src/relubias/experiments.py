"""Scenario presets, per-seed experiment runs, sweep aggregation and SVG plots."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
import os
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .gd_engine import (
    StopRule,
    Trajectory,
    detect_activation_freeze,
    init_multi_disjoint,
    init_random,
    init_single,
    init_two,
    random_assignment,
    read_trajectory_csv,
    recommend_step_size,
    run,
    theory_window,
    write_trajectory_csv,
)
from .min_norm import feasible_upper_bound_multi, linear_mni, min_norm_single, min_norm_two
from .spectral_data import (
    DataError,
    Dataset,
    LabelSpec,
    check_assumptions,
    default_constants,
    load_dataset_json,
    make_spectrum,
    sample_dataset,
    save_dataset_csv,
    save_dataset_json,
)
from .theory_monitor import (
    bound_report_single,
    bound_report_two,
    check_conditions_multi,
    check_conditions_single,
    check_conditions_two,
    conditions_preserve_masks,
    eigen_bounds,
    gram_deviation,
    homogeneity_check,
    mechanism_ok,
    mechanism_report,
    slope_estimate,
    verify_implicit_bias_multi,
    verify_implicit_bias_single,
    verify_implicit_bias_two,
)

SWEEP_DS = (500, 1000, 2000, 4000, 8000)
AGGREGATE_HEADER = ["d", "mean_error", "std", "lower_bound", "upper_bound"]

# model family, init kind and dataset/run settings for each preset
PRESETS = {
    "single_thm": dict(model="single", init="single_eps", d=2000, seeds=tuple(range(20))),
    "single_sweep_d": dict(model="single", init="single_eps", d=None, d_list=SWEEP_DS, seeds=tuple(range(20))),
    "two_good_init": dict(model="two", init="two_eps", d=2000, seeds=tuple(range(20))),
    "two_random_init": dict(model="two", init="random", d=2000, seeds=tuple(range(50))),
    "two_low_dim": dict(model="two", init="two_eps", d=15, seeds=tuple(range(5))),
    "multi_disjoint": dict(model="multi", init="multi_disjoint", d=2000, m=4, signs=(1, 1, -1, -1), seeds=tuple(range(10))),
    "multi_shared_sign_fail": dict(model="multi", init="random", d=2000, m=4, signs=(1, 1, -1, -1), seeds=tuple(range(20))),
    "single_moderate_dim": dict(
        model="single",
        init="random",
        d=50,
        init_scale=math.sqrt(2e-6),
        eta=1e-4,
        labels=LabelSpec(magnitude_dist="gaussian"),
        seeds=tuple(range(5)),
    ),
    "gram_conc": dict(model="gram", init=None, d=2000, seeds=tuple(range(20))),
}
SCENARIOS = tuple(PRESETS)


class ConfigError(DataError):
    pass


@dataclass
class ExperimentConfig:
    scenario: str
    model: str = "single"
    init: str | None = "single_eps"
    n: int = 10
    d: int | None = 2000
    d_list: tuple = ()
    spectrum: str = "isotropic"
    spectrum_params: tuple = ()
    labels: LabelSpec = field(default_factory=lambda: LabelSpec(both_signs=True))
    z_dist: str = "gaussian"
    m: int = 1
    signs: tuple = (1,)
    init_scale: float = 1e-3
    eta: float | None = None
    max_iters: int | None = None
    seeds: tuple = (0,)
    constants: dict = field(default_factory=dict)
    output_dir: str = "runs"

    def __post_init__(self):
        if self.scenario not in PRESETS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; choose from {', '.join(SCENARIOS)}")
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        if self.model not in ("single", "two", "multi", "gram"):
            raise ConfigError(f"unknown model {self.model!r}")
        if self.d is None and not self.d_list:
            raise ConfigError("need d or d_list")
        if self.model == "single":
            self.m, self.signs = 1, (1,)
        elif self.model == "two":
            self.m, self.signs = 2, (1, -1)
        elif self.model == "multi" and len(self.signs) != self.m:
            raise ConfigError("need one sign per neuron")
        if self.eta is not None and self.eta <= 0:
            raise ConfigError("eta must be positive")
        self.seeds = tuple(int(s) for s in self.seeds)
        self.d_list = tuple(int(v) for v in self.d_list)
        self.signs = tuple(int(v) for v in self.signs)

    @classmethod
    def preset(cls, scenario: str, **overrides) -> "ExperimentConfig":
        if scenario not in PRESETS:
            raise ConfigError(f"unknown scenario {scenario!r}; choose from {', '.join(SCENARIOS)}")
        fields = dict(PRESETS[scenario])
        fields.update({k: v for k, v in overrides.items() if v is not None})
        return cls(scenario=scenario, **fields)

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        obj = dict(obj)
        if "scenario" not in obj:
            raise ConfigError("config needs a scenario")
        if "labels" in obj and isinstance(obj["labels"], dict):
            obj["labels"] = LabelSpec(**obj["labels"])
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        scenario = obj.pop("scenario")
        return cls.preset(scenario, **obj)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError, TypeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["labels"] = self.labels.to_dict()
        out["seeds"] = list(self.seeds)
        out["d_list"] = list(self.d_list)
        out["signs"] = list(self.signs)
        out["spectrum_params"] = list(self.spectrum_params)
        return out

    @property
    def dims(self) -> tuple:
        return self.d_list or (self.d,)


# serialisation helpers ----------------------------------------------------


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def write_json(obj, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_clean(obj), sort_keys=True, indent=1) + "\n")
    return path


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# per-seed work -------------------------------------------------------------


def make_dataset(config: ExperimentConfig, d: int, seed: int) -> Dataset:
    spectrum = make_spectrum(config.spectrum, d, config.spectrum_params)
    return sample_dataset(spectrum, config.n, config.labels, config.z_dist, seed)


def _initial_state(config, dataset, constants, seed):
    if config.init == "single_eps":
        return init_single(dataset, constants=constants), None
    if config.init == "two_eps":
        return init_two(dataset, constants=constants), None
    assignment = None
    if config.model == "multi":
        assignment = random_assignment(dataset.y, config.signs, np.random.default_rng([seed, 1]))
    if config.init == "multi_disjoint":
        return init_multi_disjoint(dataset, assignment, config.signs, constants=constants), assignment
    if config.init == "random":
        return init_random(dataset, config.m, config.signs, config.init_scale, seed), assignment
    raise ConfigError(f"init {config.init!r} does not apply to model {config.model!r}")


def _cross_sign(traj: Trajectory, dataset: Dataset) -> float:
    """Largest preactivation of w+ on negatives and of w- on positives at the end."""
    beta = traj.beta[-1]
    vals = [beta[0, dataset.neg_idx], beta[1, dataset.pos_idx]]
    return max((float(v.max()) for v in vals if v.size), default=-math.inf)


def run_seed(config: ExperimentConfig, d: int, seed: int, seed_dir: Path, write_dataset: bool = True) -> dict:
    """Generate, train and check one seed; returns a record of the outcome."""
    seed_dir.mkdir(parents=True, exist_ok=True)
    record = {"seed": seed, "d": d}
    stage = "dataset"
    try:
        dataset = make_dataset(config, d, seed)
        if write_dataset:
            save_dataset_json(dataset, seed_dir / "dataset.json")
        constants = default_constants(dataset, **config.constants)
        record["C_g"] = constants.C_g
        record["n_pos"], record["n_neg"] = dataset.n_pos, dataset.n_neg
        if config.model == "gram":
            stage = "gram"
            dev = gram_deviation(dataset, constants)
            eb = eigen_bounds(dataset)
            report = {
                "gram_deviation": dev.to_dict(),
                "eigen_bounds": eb._asdict(),
                "sqrt_n_over_d2": math.sqrt(dataset.n / dataset.spectrum.d2),
                "assumptions": check_assumptions(dataset, constants).to_dict(),
            }
            write_json(report, seed_dir / "bounds.json")
            record.update(deviation=dev.deviation, rate=dev.rate, C_g_hat=eb.C_g_hat)
            return record

        stage = "init"
        state, assignment = _initial_state(config, dataset, constants, seed)
        eta = config.eta if config.eta is not None else recommend_step_size(dataset, constants).eta
        lo, hi = theory_window(dataset, constants)
        record["eta"] = eta
        record["eta_in_window"] = lo <= eta <= hi
        stage = "gd"
        traj = run(state, dataset, eta, StopRule(max_iters=config.max_iters))
        write_trajectory_csv(traj, seed_dir / "trajectory.csv")
        summary = traj.summary()
        write_json(summary, seed_dir / "summary.json")
        record.update(t0=summary["t0"], final_risk=summary["final_risk"], iters=summary["iters"],
                      stop_reason=summary["stop_reason"])

        stage = "monitor"
        report = {"constants": constants.to_dict(), "eta": eta, "eta_window": [lo, hi]}
        mech = mechanism_report(traj, dataset)
        report["mechanism"] = mech
        record["mechanism_ok"] = mechanism_ok(mech)
        ledger = None
        if config.model == "single":
            ledger = check_conditions_single(traj, dataset, constants)
        elif config.model == "two":
            ledger = check_conditions_two(traj, dataset, constants)
        elif assignment is not None:
            ledger = check_conditions_multi(traj, dataset, assignment, constants)
            report["assignment"] = assignment
        if ledger is not None:
            ledger.to_csv(seed_dir / "ledger.csv")
            record["ledger_all_hold"] = ledger.all_hold(1)
            record["ledger_violations_t1"] = [name for t, name in ledger.violations() if t == 1]
            record["condition_a_violation"] = ledger.first_violation("a")
            record["masks_preserved"] = conditions_preserve_masks(ledger, traj)

        record["homogeneous"] = homogeneity_check(state, dataset, eta, traj.iters)
        mech["homogeneous"] = record["homogeneous"]
        record["mechanism_ok"] = record["mechanism_ok"] and record["homogeneous"]

        stage = "bounds"
        W = traj.final.weights
        if config.model == "single" and config.init == "single_eps":
            bias = verify_implicit_bias_single(traj, dataset)
            sol = min_norm_single(dataset, fallback=True)
            bounds = bound_report_single(W[0], dataset, constants, sol)
            report.update(implicit_bias=bias.to_dict(), bound=bounds.to_dict(), min_norm=sol.to_dict())
            record.update(bias_passed=bias.passed, distance=bounds.distance[0],
                          lower=bounds.lower_bound[0], upper=bounds.upper_bound[0], within=bounds.within,
                          fit_residual=bias.fit_residual[0], max_off=bias.max_off[0],
                          projection_error=bias.projection_error[0])
        elif config.model == "single":
            # moderate dimension: the limit should be a linear MNI on its final active set
            S = np.flatnonzero(traj.masks[-1, 0])
            target = np.maximum(dataset.y[S], 0.0)
            w_S = linear_mni(dataset.X[S], target)
            gap = float(np.linalg.norm(W[0] - w_S))
            report["subset_mni"] = {"active_set": S, "distance_to_subset_mni": gap}
            record.update(active_set=S.tolist(), subset_mni_gap=gap)
        elif config.model == "two":
            bias = verify_implicit_bias_two(traj, dataset)
            report["implicit_bias"] = bias.to_dict()
            record.update(bias_passed=bias.passed, cross_sign=_cross_sign(traj, dataset),
                          fit_residual=max(bias.fit_residual), projection_error=max(bias.projection_error))
            if config.init == "two_eps":
                sol = min_norm_two(dataset)
                bounds = bound_report_two(W, dataset, constants, sol)
                report.update(bound=bounds.to_dict(), min_norm=sol.to_dict())
                record.update(distance=bounds.distance, lower=bounds.lower_bound, upper=bounds.upper_bound)
        else:
            report["feasible_upper_bound"] = feasible_upper_bound_multi(dataset, config.m, config.signs)
            report["limit_objective"] = 0.5 * float(np.sum(W * W))
            if config.init == "multi_disjoint":
                bias = verify_implicit_bias_multi(traj, dataset, assignment)
                report["implicit_bias"] = bias.to_dict()
                record.update(bias_passed=bias.passed, fit_residual=max(bias.fit_residual),
                              max_off=max(bias.max_off))
        write_json(report, seed_dir / "bounds.json")
    except Exception as exc:  # recorded per seed so the remaining seeds still run
        record["error"] = {"stage": stage, "type": type(exc).__name__, "message": str(exc),
                           "trace": traceback.format_exc(limit=3)}
    return record


def _workers(count: int) -> int:
    cap = os.environ.get("RELUBIAS_THREADS")
    try:
        limit = int(cap) if cap else 1
    except ValueError:
        limit = 1
    return max(1, min(limit, count))


def aggregate_sweep(records: list[dict]) -> list[dict]:
    rows = []
    for d in sorted({r["d"] for r in records}):
        ok = [r for r in records if r["d"] == d and "distance" in r]
        if not ok:
            continue
        dist = np.array([r["distance"] for r in ok])
        rows.append({
            "d": d,
            "mean_error": float(dist.mean()),
            "std": float(dist.std(ddof=1)) if dist.size > 1 else 0.0,
            "lower_bound": float(np.mean([r["lower"] for r in ok])),
            "upper_bound": float(np.mean([r["upper"] for r in ok])),
        })
    return rows


def write_aggregate(rows: list[dict], path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(AGGREGATE_HEADER)
        for r in rows:
            w.writerow([r["d"]] + [repr(float(r[k])) for k in AGGREGATE_HEADER[1:]])
    return path


def _rate(records, key) -> float | None:
    vals = [bool(r.get(key)) for r in records if "error" not in r and key in r]
    return sum(vals) / len(vals) if vals else None


def summarize(config: ExperimentConfig, records: list[dict]) -> dict:
    good = [r for r in records if "error" not in r]
    out = {"seeds_run": len(records), "seeds_failed": len(records) - len(good)}
    for key in ("ledger_all_hold", "bias_passed", "mechanism_ok", "within", "masks_preserved", "homogeneous"):
        rate = _rate(records, key)
        if rate is not None:
            out[f"{key}_rate"] = rate
    if config.scenario == "two_random_init":
        out["stuck_with_t1_violation"] = sum(
            1 for r in good if r["final_risk"] > 1e-3 and r.get("ledger_violations_t1")
        )
    if config.scenario == "multi_shared_sign_fail":
        hits = [r for r in good if r.get("condition_a_violation") is not None]
        out["condition_a_violation_rate"] = len(hits) / len(good) if good else None
    if config.model == "gram":
        out["max_deviation_over_rate"] = max(r["deviation"] / r["rate"] for r in good) if good else None
        out["max_C_g_hat"] = max(r["C_g_hat"] for r in good) if good else None
    return out


@dataclass
class ArtifactManifest:
    scenario: str
    root: Path
    files: list
    records: list
    summary: dict
    config: dict

    @property
    def errors(self) -> list:
        return [{"seed": r["seed"], "d": r["d"], **r["error"]} for r in self.records if "error" in r]

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "version": __version__,
            "config": self.config,
            "files": self.files,
            "seeds": [{k: v for k, v in r.items() if k != "error"} for r in self.records],
            "errors": [{k: v for k, v in e.items() if k != "trace"} for e in self.errors],
            "summary": self.summary,
        }


def run_experiment(config: ExperimentConfig) -> ArtifactManifest:
    root = Path(config.output_dir) / config.scenario
    root.mkdir(parents=True, exist_ok=True)
    sweep = len(config.dims) > 1
    jobs = []
    for d in config.dims:
        for seed in config.seeds:
            sub = root / (f"d_{d}" if sweep else "") / f"seed_{seed}"
            jobs.append((d, seed, sub))
    with ThreadPoolExecutor(max_workers=_workers(len(jobs))) as pool:
        records = list(pool.map(lambda job: run_seed(config, job[0], job[1], job[2], write_dataset=not sweep), jobs))

    summary = summarize(config, records)
    if sweep:
        rows = aggregate_sweep(records)
        agg = write_aggregate(rows, root / "aggregate.csv")
        if len(rows) >= 4:
            fit = slope_estimate([(r["d"], r["mean_error"]) for r in rows])
            summary.update(slope=fit.slope, intercept=fit.intercept, r2=fit.r2)
            emit_plot(agg, root / "sweep.svg")
        summary["means_within_envelope"] = all(r["lower_bound"] <= r["mean_error"] <= r["upper_bound"] for r in rows)

    files = sorted(p for p in root.rglob("*") if p.is_file() and p.name != "manifest.json")
    listing = [{"path": p.relative_to(root).as_posix(), "sha256": sha256(p)} for p in files]
    manifest = ArtifactManifest(config.scenario, root, listing, records, summary, config.to_dict())
    write_json(manifest.to_dict(), root / "manifest.json")
    return manifest


def generate(config: ExperimentConfig) -> list[Path]:
    """Write dataset JSON and CSV for every (d, seed) of the config."""
    root = Path(config.output_dir) / config.scenario
    out = []
    for d in config.dims:
        for seed in config.seeds:
            sub = root / (f"d_{d}" if len(config.dims) > 1 else "") / f"seed_{seed}"
            sub.mkdir(parents=True, exist_ok=True)
            ds = make_dataset(config, d, seed)
            out.append(save_dataset_json(ds, sub / "dataset.json"))
            out.append(save_dataset_csv(ds, sub / "dataset.csv"))
    return out


# verification of persisted runs ------------------------------------------


def verify_artifacts(trajectory_path, dataset_path, summary_path=None, eta=None, signs=None,
                     checks=("primal_dual", "dual_update", "frozen_dual", "risk", "conditions")) -> tuple[int, dict]:
    """Re-run the monitors on files written by ``run``. Returns (exit status, report)."""
    from .gd_engine import dual_update_check, frozen_dual_check, primal_dual_residual
    from .theory_monitor import frozen_tolerance

    try:
        dataset = load_dataset_json(dataset_path)
        if summary_path is not None:
            summ = json.loads(Path(summary_path).read_text())
            eta = summ["eta"] if eta is None else eta
            signs = summ.get("signs") if signs is None else signs
        if eta is None or signs is None:
            raise DataError("eta and signs are required (pass the run summary)")
        traj = read_trajectory_csv(trajectory_path, eta, signs)
        if traj.n != dataset.n:
            raise DataError("trajectory and dataset disagree on n")
    except (DataError, OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        return 2, {"passed": False, "error": f"{type(exc).__name__}: {exc}"}

    results = {}
    if "primal_dual" in checks:
        res = primal_dual_residual(traj, dataset)
        results["primal_dual"] = {"passed": res <= 1e-8, "residual": res}
    if "dual_update" in checks:
        bad = dual_update_check(traj, dataset)
        results["dual_update_check"] = {"passed": not bad, "violations": [dataclasses.asdict(v) for v in bad[:20]],
                                        "count": len(bad)}
    if "frozen_dual" in checks:
        bad = frozen_dual_check(traj, frozen_tolerance(traj, dataset))
        results["frozen_dual_check"] = {"passed": not bad, "count": len(bad)}
    if "risk" in checks:
        r = traj.output() - dataset.y
        gap = float(np.abs(0.5 * np.sum(r * r, axis=1) - traj.risk).max())
        results["risk_recompute"] = {"passed": gap <= 1e-10 * (1 + float(traj.risk.max())), "gap": gap}
    if "conditions" in checks and traj.m in (1, 2):
        constants = default_constants(dataset)
        ledger = (check_conditions_single if traj.m == 1 else check_conditions_two)(traj, dataset, constants)
        results["conditions"] = {"passed": ledger.all_hold(1), "violations": ledger.violations(1)[:20]}
    if "conditions" in checks:
        results["freeze"] = {"t0": detect_activation_freeze(traj)}
    passed = all(v.get("passed", True) for v in results.values())
    return (0 if passed else 1), {"passed": passed, "checks": results}


# plotting --------------------------------------------------------------------


def read_aggregate(path) -> list[dict]:
    try:
        with Path(path).open(newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise DataError(str(exc)) from exc
    if not rows:
        raise DataError("aggregate CSV has no rows")
    try:
        out = [{k: float(r[k]) for k in AGGREGATE_HEADER} for r in rows]
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed aggregate CSV: {exc}") from exc
    if any(r["d"] <= 0 or r["mean_error"] <= 0 for r in out):
        raise DataError("d and mean_error must be positive for log axes")
    return out


def emit_plot(aggregate_path, svg_path=None, style: str = "loglog") -> Path:
    """Log-log SVG of mean error against d with bound envelopes and a slope -1/2 guide."""
    if style != "loglog":
        raise DataError(f"unknown plot style {style!r}")
    rows = read_aggregate(aggregate_path)
    svg_path = Path(svg_path) if svg_path else Path(aggregate_path).with_suffix(".svg")
    W, H, L, R, T, B = 640, 440, 80, 170, 30, 60
    ds = np.array([r["d"] for r in rows])
    mean = np.array([r["mean_error"] for r in rows])
    std = np.array([r["std"] for r in rows])
    lower = np.array([r["lower_bound"] for r in rows])
    upper = np.array([r["upper_bound"] for r in rows])
    ys = np.concatenate([mean, upper, lower[lower > 0], (mean - std)[mean - std > 0], mean + std])
    x0, x1 = math.log10(ds.min()) - 0.1, math.log10(ds.max()) + 0.1
    y0, y1 = math.floor(math.log10(ys.min())), math.ceil(math.log10(ys.max()))
    if x1 - x0 < 0.3:
        x0, x1 = x0 - 0.3, x1 + 0.3

    def px(d):
        return L + (math.log10(d) - x0) / (x1 - x0) * (W - L - R)

    def py(v):
        return T + (y1 - math.log10(v)) / (y1 - y0) * (H - T - B)

    def poly(xs, vs, style_attr):
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(xs, vs) if b > 0)
        return f'<polyline fill="none" points="{pts}" {style_attr}/>'

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f"<!-- relubias {__version__} -->",
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" '
        'font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
        f'<rect x="{L}" y="{T}" width="{W - L - R}" height="{H - T - B}" fill="none" stroke="black"/>',
    ]
    for e in range(int(y0), int(y1) + 1):
        yy = py(10.0**e)
        out.append(f'<line x1="{L}" y1="{yy:.2f}" x2="{W - R}" y2="{yy:.2f}" stroke="#ddd"/>')
        out.append(f'<text x="{L - 6}" y="{yy + 4:.2f}" text-anchor="end">1e{e}</text>')
    for d in ds:
        xx = px(d)
        out.append(f'<line x1="{xx:.2f}" y1="{H - B}" x2="{xx:.2f}" y2="{H - B + 5}" stroke="black"/>')
        out.append(f'<text x="{xx:.2f}" y="{H - B + 18}" text-anchor="middle">{int(d)}</text>')
    out.append(f'<text x="{(L + W - R) / 2:.1f}" y="{H - 15}" text-anchor="middle">d</text>')
    out.append(f'<text x="18" y="{(T + H - B) / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 18 {(T + H - B) / 2:.1f})">distance to min-norm solution</text>')
    out.append(poly(ds, upper, 'stroke="#c0392b" stroke-dasharray="6,4"'))
    out.append(poly(ds, lower, 'stroke="#2471a3" stroke-dasharray="6,4"'))
    guide = mean[0] * np.sqrt(ds[0] / ds)
    out.append(poly(ds, guide, 'stroke="#777" stroke-dasharray="2,3"'))
    for d, m_, s_ in zip(ds, mean, std):
        xx = px(d)
        lo_v = m_ - s_ if m_ - s_ > 0 else m_
        out.append(f'<line x1="{xx:.2f}" y1="{py(lo_v):.2f}" x2="{xx:.2f}" y2="{py(m_ + s_):.2f}" stroke="black"/>')
        out.append(f'<circle cx="{xx:.2f}" cy="{py(m_):.2f}" r="4" fill="black"/>')
    legend = [
        ("black", "", "mean +/- std"),
        ("#c0392b", "6,4", "upper bound"),
        ("#2471a3", "6,4", "lower bound"),
        ("#777", "2,3", "slope -1/2"),
    ]
    lx = W - R + 15
    for j, (color, dash, label) in enumerate(legend):
        yy = T + 15 + 20 * j
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        out.append(f'<line x1="{lx}" y1="{yy}" x2="{lx + 25}" y2="{yy}" stroke="{color}"{dash_attr}/>')
        out.append(f'<text x="{lx + 30}" y="{yy + 4}">{label}</text>')
    out.append("</svg>")
    svg_path.write_text("\n".join(out) + "\n")
    return svg_path
