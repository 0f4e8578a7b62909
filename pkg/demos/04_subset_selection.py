"""At moderate dimension the limit depends on which examples stay active.

Small random initialisations at d=50 freeze onto different subsets; on each
the trained neuron behaves like a linear interpolator of that subset.
"""

import math

import numpy as np

from relubias.gd_engine import StopRule, detect_activation_freeze, init_random, run
from relubias.min_norm import linear_mni
from relubias.spectral_data import LabelSpec, make_spectrum, sample_dataset

ds = sample_dataset(make_spectrum("isotropic", 50), 10, LabelSpec(magnitude_dist="gaussian"), "gaussian", seed=0)
print("labels:", np.round(ds.y, 2).tolist())
for seed in range(5):
    traj = run(init_random(ds, 1, [1], math.sqrt(2e-6), seed), ds, 1e-4, StopRule(max_iters=20000))
    S = np.flatnonzero(traj.masks[-1, 0])
    w = traj.final.weights[0]
    fit = np.abs(ds.X[S] @ w - ds.y[S]).max()
    gap = np.linalg.norm(w - linear_mni(ds.X[S], np.maximum(ds.y[S], 0)))
    print(f"init {seed}: active {S.tolist()}  freeze t0={detect_activation_freeze(traj)}  "
          f"max fit error on S {fit:.1e}  distance to subset MNI {gap:.3f}")
