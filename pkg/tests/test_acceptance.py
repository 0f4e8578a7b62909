"""Acceptance criteria 1-10, each at its stated tolerance.

Every test records a one-line PASS/FAIL verdict; the lines are printed in
the pytest terminal summary and by running this file directly.
"""

import math
import time

import numpy as np
import pytest

from relubias.experiments import ExperimentConfig, run_experiment
from relubias.gd_engine import init_single, recommend_step_size, run
from relubias.min_norm import feasible_witness_two, min_norm_single, min_norm_single_pg, min_norm_two, original_residual_two
from relubias.spectral_data import LabelSpec, default_constants
from relubias.theory_monitor import mechanism_ok, mechanism_report

from conftest import random_ds
from oracles import brute_force_two, small_instance

VERDICTS = {}


def record(number, ok, detail):
    VERDICTS[number] = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(VERDICTS[number])
    return ok


class Timed:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.start


@pytest.fixture(scope="session")
def scenario(tmp_path_factory):
    cache = {}
    root = tmp_path_factory.mktemp("acceptance")

    def get(name):
        if name not in cache:
            with Timed() as clock:
                man = run_experiment(ExperimentConfig.preset(name, output_dir=str(root)))
            cache[name] = (man, clock.seconds)
        return cache[name]

    return get


def test_criterion_01_single_relu_implicit_bias(scenario):
    man, secs = scenario("single_thm")
    good = [r for r in man.records if "error" not in r]
    passed = [
        r for r in good
        if r["t0"] == 1 and r["fit_residual"] <= 1e-6 and r["max_off"] <= 1e-9 and r["projection_error"] <= 1e-6
    ]
    rate = len(passed) / len(man.records)
    ok = rate >= 0.95 and secs < 30
    failed = sorted({r["seed"] for r in man.records} - {r["seed"] for r in passed})
    assert record(1, ok, f"pass rate {rate:.2f} over {len(man.records)} seeds (failed {failed}), {secs:.1f}s"), VERDICTS[1]


def test_criterion_02_distance_scaling(scenario):
    man, secs = scenario("single_sweep_d")
    s = man.summary
    ok = (
        -0.6 <= s["slope"] <= -0.4
        and s["r2"] >= 0.95
        and s["means_within_envelope"]
        and secs < 600
        and not man.errors
    )
    detail = f"slope {s['slope']:.3f}, r2 {s['r2']:.4f}, envelope {s['means_within_envelope']}, {secs:.1f}s"
    assert record(2, ok, detail), VERDICTS[2]


ALL_POSITIVE_RUNS = []


def test_criterion_03_all_positive():
    worst = 0.0
    for seed in range(10):
        ds = random_ds(8, 1000, seed, LabelSpec(frac_positive=1.0))
        c = default_constants(ds)
        traj = run(init_single(ds, constants=c), ds, recommend_step_size(ds, c).eta)
        ALL_POSITIVE_RUNS.append((traj, ds))
        w_star = min_norm_single(ds).weights[0]
        worst = max(worst, np.linalg.norm(traj.final.weights[0] - w_star) / np.linalg.norm(w_star))
    assert record(3, worst <= 1e-6, f"max relative distance {worst:.2e} over 10 seeds"), VERDICTS[3]


def test_criterion_04_min_norm_oracle():
    with Timed() as clock:
        worst_gap = worst_kkt = 0.0
        bad = 0
        for k in range(200):
            ds = small_instance(10_000 + k)
            sol = min_norm_single(ds)
            ref = min_norm_single_pg(ds)
            gap = float(np.linalg.norm(sol.weights[0] - ref.weights[0]))
            worst_gap, worst_kkt = max(worst_gap, gap), max(worst_kkt, sol.kkt_residual)
            bad += gap > 1e-6 or sol.kkt_residual > 1e-7 or ds.n_pos == 0 or ds.n_neg == 0
    ok = bad == 0 and clock.seconds < 60
    detail = f"{200 - bad}/200 agree, max |dw| {worst_gap:.1e}, max KKT {worst_kkt:.1e}, {clock.seconds:.1f}s"
    assert record(4, ok, detail), VERDICTS[4]


def test_criterion_05_two_relu_restricted_program():
    bad = []
    for k in range(50):
        ds = small_instance(20_000 + k, n_max=6, d_max=24)
        sol = min_norm_two(ds)
        wp, wm = sol.weights
        tp, tm = feasible_witness_two(ds)
        feasible = original_residual_two(ds, wp, wm).max() <= 1e-8
        below_witness = sol.objective <= 0.5 * (tp @ tp + tm @ tm) + 1e-12
        no_lower = sol.objective <= brute_force_two(ds) + 1e-7
        if not (feasible and below_witness and no_lower):
            bad.append(k)
    assert record(5, not bad, f"{50 - len(bad)}/50 instances pass"), VERDICTS[5]


def test_criterion_06_two_relu_dynamics(scenario):
    man, _ = scenario("two_good_init")
    good = [r for r in man.records if "error" not in r]
    ledger_rate = sum(r["ledger_all_hold"] for r in good) / len(man.records)
    fits = [r for r in good if r["fit_residual"] <= 1e-6 and r["cross_sign"] <= 1e-9]
    both = [r for r in good if r["n_pos"] and r["n_neg"]]
    separated = all(min(r["distance"]) > 0 for r in both)
    ok = ledger_rate >= 0.95 and len(fits) == len(man.records) and separated
    detail = (f"ledger rate {ledger_rate:.2f}, fit+cross-sign {len(fits)}/{len(man.records)}, "
              f"distances positive {separated}")
    assert record(6, ok, detail), VERDICTS[6]


def test_criterion_07_multi_neuron_disjoint(scenario):
    man, _ = scenario("multi_disjoint")
    good = [r for r in man.records if "error" not in r]
    ledger_rate = sum(r["ledger_all_hold"] for r in good) / len(man.records)
    interp = sum(r["bias_passed"] for r in good)
    ok = ledger_rate >= 0.90 and interp == len(man.records)
    detail = f"ledger rate {ledger_rate:.2f}, interpolate+inactive {interp}/{len(man.records)}"
    assert record(7, ok, detail), VERDICTS[7]


def test_criterion_08_failure_scenarios(scenario):
    rand, _ = scenario("two_random_init")
    shared, _ = scenario("multi_shared_sign_fail")
    stuck = rand.summary["stuck_with_t1_violation"]
    rate = shared.summary["condition_a_violation_rate"]
    ok = stuck >= 1 and rate >= 0.5 and not rand.errors and not shared.errors
    detail = f"random init stuck with t=1 violation in {stuck}/50, shared-sign (a) violations {rate:.2f}"
    assert record(8, ok, detail), VERDICTS[8]


def test_criterion_09_mechanism_invariants(scenario):
    names = ["single_thm", "single_sweep_d", "two_good_init", "multi_disjoint", "two_random_init",
             "multi_shared_sign_fail"]
    total, failures = 0, []
    for name in names:
        man, _ = scenario(name)
        for r in man.records:
            total += 1
            if "error" in r or not r["mechanism_ok"]:
                failures.append((name, r["d"], r["seed"]))
    for traj, ds in ALL_POSITIVE_RUNS:
        total += 1
        if not mechanism_ok(mechanism_report(traj, ds)):
            failures.append(("all_positive", ds.d, ds.seed))
    assert record(9, not failures, f"{total - len(failures)}/{total} runs pass {failures[:5]}"), VERDICTS[9]


def test_criterion_10_concentration(scenario):
    man, _ = scenario("gram_conc")
    good = [r for r in man.records if "error" not in r]
    envelope = 5 * math.sqrt(10 / 2000)
    dev = max(r["deviation"] for r in good)
    cg = max(r["C_g_hat"] for r in good)
    ok = len(good) == 20 and dev <= envelope and cg <= 1.3
    assert record(10, ok, f"max deviation {dev:.3f} (envelope {envelope:.3f}), max C_g_hat {cg:.3f}"), VERDICTS[10]


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
