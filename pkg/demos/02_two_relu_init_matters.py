"""Two ReLUs of opposite sign: a small structured start versus a random one."""

import numpy as np

from relubias.gd_engine import init_random, init_two, recommend_step_size, run
from relubias.min_norm import min_norm_two
from relubias.spectral_data import LabelSpec, default_constants, make_spectrum, sample_dataset
from relubias.theory_monitor import bound_report_two, check_conditions_two

ds = sample_dataset(make_spectrum("isotropic", 2000), 10, LabelSpec(both_signs=True), "gaussian", seed=3)
c = default_constants(ds)
eta = recommend_step_size(ds, c).eta

good = run(init_two(ds, constants=c), ds, eta)
led = check_conditions_two(good, ds, c)
print(f"structured start: final risk {good.risk[-1]:.2e}, eight conditions hold for t>=1: {led.all_hold(1)}")
rep = bound_report_two(good.final.weights, ds, c, min_norm_two(ds))
print("  distances to the min-norm pair:", [f"{d:.4f}" for d in rep.distance])

for seed in range(5):
    bad = run(init_random(ds, 2, [1, -1], 1e-3, seed), ds, eta)
    led = check_conditions_two(bad, ds, c)
    at1 = [name for t, name in led.violations() if t == 1]
    print(f"random start {seed}: final risk {bad.risk[-1]:.2e}, conditions failing at t=1: {at1}")
    dead = [i for i in range(ds.n) if not bad.masks[-1, :, i].any()]
    if dead:
        print(f"  examples no neuron ever fits: {dead}, labels {np.round(ds.y[dead], 3).tolist()}")
