"""Independent reference implementations used as test oracles."""

import itertools

import numpy as np
from scipy import optimize

from relubias.min_norm import original_residual_two, projected_gradient_qp, restricted_matrices

from conftest import random_ds


def small_instance(seed, n_max=8, d_max=32):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, n_max + 1))
    d = int(rng.integers(n, d_max + 1))
    return random_ds(n, d, seed)


def slsqp_single(ds):
    cons = [{"type": "eq", "fun": lambda w: ds.X_pos @ w - ds.y_pos}]
    if ds.n_neg:
        cons.append({"type": "ineq", "fun": lambda w: -(ds.X_neg @ w)})
    res = optimize.minimize(lambda w: 0.5 * w @ w, np.zeros(ds.d), jac=lambda w: w, constraints=cons,
                            method="SLSQP", options={"ftol": 1e-14, "maxiter": 500})
    return res.x


def brute_force_two(ds):
    """Solve every partition with the dual projected-gradient route."""
    best = np.inf
    for bits in itertools.product((0, 1), repeat=ds.n):
        part = tuple(1 + b if y > 0 else 3 + b for b, y in zip(bits, ds.y))
        A, b, G = restricted_matrices(ds, part)
        w, _, mu, _ = projected_gradient_qp(A, b, G)
        wp, wm = w[: ds.d], w[ds.d :]
        if np.abs(A @ w - b).max() > 1e-7 or (G @ w).max() > 1e-7:
            continue  # infeasible restricted program
        if original_residual_two(ds, wp, wm).max() > 1e-6:
            continue
        best = min(best, 0.5 * float(w @ w))
    return best
