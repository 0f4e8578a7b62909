"""Runtime measurements of the quantities the theory constrains.

Covers Gram-matrix concentration, the freezing conditions evaluated along a
trajectory, the closed-form limits of gradient descent, and the distance
bounds to the minimum-norm solution.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy import stats

from .gd_engine import (
    StopRule,
    Trajectory,
    check_assignment,
    detect_activation_freeze,
    dual_update_check,
    frozen_dual_check,
    primal_dual_residual,
    run,
    step,
)
from .min_norm import MinNormSolution
from .relu_model import ModelState, gradient, preactivations, relu
from .spectral_data import Constants, DataError, Dataset


# concentration ------------------------------------------------------------


@dataclass(frozen=True)
class GramDeviation:
    deviation: float  # || XX^T / l1 - I ||_op
    inverse_deviation: float  # || l1 (XX^T)^{-1} - I ||_op
    envelope: float  # C * max(sqrt(n/d2), n/dinf)
    rate: float  # max(sqrt(n/d2), n/dinf)

    @property
    def ratio(self) -> float:
        return self.deviation / self.envelope

    def to_dict(self) -> dict:
        return {**self.__dict__, "ratio": self.ratio}


def gram_deviation(dataset: Dataset, constants: Constants) -> GramDeviation:
    eig = dataset.gram_eigs
    sp = dataset.spectrum
    n = dataset.n
    rate = max(math.sqrt(n / sp.d2), n / sp.dinf)
    dev = float(np.abs(eig / sp.l1 - 1).max())
    inv = float(np.abs(sp.l1 / eig - 1).max()) if eig[0] > 0 else math.inf
    return GramDeviation(dev, inv, constants.C * rate, rate)


class EigenBounds(NamedTuple):
    mu_n: float
    mu_1: float
    C_g_hat: float


def eigen_bounds(dataset: Dataset) -> EigenBounds:
    eig = dataset.gram_eigs
    if not eig[0] > 0:
        raise DataError("XX^T is singular")
    l1 = dataset.spectrum.l1
    return EigenBounds(float(eig[0]), float(eig[-1]), float(max(eig[-1] / l1, l1 / eig[0])))


# freezing conditions ------------------------------------------------------


@dataclass
class ConditionLedger:
    kind: str
    names: tuple
    t: np.ndarray
    holds: np.ndarray  # T x K
    margins: np.ndarray  # T x K

    def column(self, name: str) -> np.ndarray:
        return self.holds[:, self.names.index(name)]

    def all_hold(self, t_from: int = 1) -> bool:
        sel = self.t >= t_from
        return bool(np.all(self.holds[sel]))

    def holds_at(self, t: int) -> dict:
        row = int(np.searchsorted(self.t, t))
        return dict(zip(self.names, map(bool, self.holds[row])))

    def violations(self, t_from: int = 0) -> list[tuple[int, str]]:
        out = []
        for r, c in zip(*np.nonzero(~self.holds)):
            if self.t[r] >= t_from:
                out.append((int(self.t[r]), self.names[c]))
        return out

    def first_violation(self, name: str) -> int | None:
        bad = np.flatnonzero(~self.column(name))
        return int(self.t[bad[0]]) if bad.size else None

    def rows(self):
        for r, t in enumerate(self.t):
            for c, name in enumerate(self.names):
                yield int(t), name, bool(self.holds[r, c]), float(self.margins[r, c])

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "condition", "holds", "margin"])
            for t, name, ok, margin in self.rows():
                w.writerow([t, name, int(ok), repr(margin)])
        return path


def _min(v) -> float:
    v = np.asarray(v, dtype=float)
    return float(v.min()) if v.size else math.inf


def _window(dataset: Dataset, c: Constants) -> tuple[float, float, float]:
    l1 = dataset.spectrum.l1
    lo = -3 * dataset.y_max / (c.C_g * l1)
    hi = -dataset.y_min / (c.C_alpha * l1)
    norm_cap = c.C_alpha * math.sqrt(dataset.n) * dataset.y_max / l1
    return lo, hi, norm_cap


def _sandwich_margin(alpha, lo, hi) -> float:
    return min(_min(alpha - lo), _min(hi - alpha))


def _ledger(kind, names, traj, margin_fn, strict=()):
    margins = np.array([[margin_fn(name, r) for name in names] for r in range(len(traj.t))])
    strict_mask = np.array([name in strict for name in names])
    holds = np.where(strict_mask, margins > 0, margins >= 0)
    return ConditionLedger(kind, tuple(names), np.array(traj.t), holds, margins)


def _require_arity(traj: Trajectory, signs):
    if traj.m != len(signs) or not np.array_equal(traj.signs, np.asarray(signs, dtype=float)):
        raise DataError(f"trajectory has signs {traj.signs.tolist()}, expected {list(signs)}")


def check_conditions_single(traj: Trajectory, dataset: Dataset, constants: Constants) -> ConditionLedger:
    """Conditions a-f for one positive neuron, evaluated at every logged t."""
    _require_arity(traj, [1])
    lo, hi, cap = _window(dataset, constants)
    P, N = dataset.pos_idx, dataset.neg_idx
    y_pos = dataset.y_pos

    def margin(name, r):
        beta, alpha = traj.beta[r, 0], traj.alpha[r, 0]
        if name == "a":
            return _min(beta[P])
        if name == "b":
            return _sandwich_margin(alpha[N], lo, hi)
        if name == "c":
            return constants.C_y * np.linalg.norm(y_pos) - np.linalg.norm(beta[P] - y_pos)
        if name == "d":
            return cap - np.linalg.norm(alpha)
        if name == "e":
            return _min(-beta[N])
        target = np.concatenate([beta[P], np.zeros(N.size)])
        return -float(np.abs(relu(beta) - target).max())

    return _ledger("single", "abcdef", traj, margin, strict="a")


def check_conditions_two(traj: Trajectory, dataset: Dataset, constants: Constants) -> ConditionLedger:
    """Conditions a-h for the (+, -) neuron pair."""
    _require_arity(traj, [1, -1])
    lo, hi, cap = _window(dataset, constants)
    P, N = dataset.pos_idx, dataset.neg_idx
    yp, yn = dataset.y_pos, dataset.y_neg

    def margin(name, r):
        bp, bm = traj.beta[r]
        ap, am = traj.alpha[r]
        if name == "a":
            return _min(bp[P])
        if name == "b":
            return _min(bm[N])
        if name == "c":
            return _sandwich_margin(ap[N], lo, hi)
        if name == "d":
            return _sandwich_margin(am[P], lo, hi)
        if name == "e":
            return min(
                constants.C_y * np.linalg.norm(yp) - np.linalg.norm(bp[P] - yp),
                constants.C_y * np.linalg.norm(yn) - np.linalg.norm(bm[N] + yn),
            )
        if name == "f":
            return cap - max(np.linalg.norm(ap), np.linalg.norm(am))
        if name == "g":
            return _min(-bp[N])
        return _min(-bm[P])

    return _ledger("two", "abcdefgh", traj, margin, strict="ab")


def check_conditions_multi(traj: Trajectory, dataset: Dataset, assignment, constants: Constants) -> ConditionLedger:
    """Conditions a-e for m neurons under a disjoint sign-matched assignment."""
    a = check_assignment(dataset.y, assignment, traj.signs)
    lo, hi, cap = _window(dataset, constants)
    n, m = dataset.n, traj.m
    own = np.zeros((m, n), dtype=bool)
    own[a, np.arange(n)] = True
    y, s = dataset.y, traj.signs

    def margin(name, r):
        beta, alpha = traj.beta[r], traj.alpha[r]
        if name == "a":
            return _min(beta[own])
        if name == "b":
            return _sandwich_margin(alpha[~own], lo, hi)
        if name == "c":
            return min(
                constants.C_y * np.linalg.norm(y[own[k]]) - np.linalg.norm(beta[k, own[k]] - s[k] * y[own[k]])
                for k in range(m)
            )
        if name == "d":
            return cap - float(np.linalg.norm(alpha, axis=1).max())
        return _min(-beta[~own])

    return _ledger("multi", "abcde", traj, margin, strict="a")


def conditions_preserve_masks(ledger: ConditionLedger, traj: Trajectory) -> bool:
    """Whenever every condition holds at t, the masks at t and t+1 agree."""
    masks = traj.masks
    for r in range(len(ledger.t) - 1):
        if np.all(ledger.holds[r]) and not np.array_equal(masks[r], masks[r + 1]):
            return False
    return True


# implicit-bias limits ---------------------------------------------------


def project_affine(w: np.ndarray, X_S: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Closest point to w on {v : X_S v = target}."""
    if X_S.shape[0] == 0:
        return np.array(w, dtype=float)
    K = X_S @ X_S.T
    return w + X_S.T @ np.linalg.solve(K, target - X_S @ w)


def first_iterate_single(dataset: Dataset, eps: np.ndarray, eta: float) -> np.ndarray:
    """eta X^T (y - eps + (XX^T)^{-1} eps / eta)."""
    return eta * dataset.X.T @ (dataset.y - eps + dataset.solve_gram(eps) / eta)


def first_iterate_two(dataset: Dataset, eps_plus, eps_minus, eta: float) -> tuple[np.ndarray, np.ndarray]:
    y, X = dataset.y, dataset.X
    wp = eta * X.T @ (y - eps_plus + eps_minus + dataset.solve_gram(eps_plus) / eta)
    wm = eta * X.T @ (-y + eps_plus - eps_minus + dataset.solve_gram(eps_minus) / eta)
    return wp, wm


@dataclass
class BiasReport:
    projection_error: list  # per neuron ||w_final - projection of w^(1)||
    fit_residual: list  # per neuron ||X_S w - target|| / ||target||
    max_off: list  # per neuron max preactivation outside its fitted set
    passed: bool
    w1_consistency: float = math.nan  # closed form w^(1) against one GD step
    projections: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "projection_error": self.projection_error,
            "fit_residual": self.fit_residual,
            "max_off": self.max_off,
            "passed": self.passed,
            "w1_consistency": self.w1_consistency,
        }


def _bias_report(dataset, final_W, w1s, sets, targets, tol, off_tol, w1_gap):
    proj_err, fit, off, projs = [], [], [], []
    X = dataset.X
    for w, w1, S, tgt in zip(final_W, w1s, sets, targets):
        S = np.asarray(S, dtype=int)
        rest = np.setdiff1d(np.arange(dataset.n), S)
        p = project_affine(w1, X[S], tgt)
        projs.append(p)
        proj_err.append(float(np.linalg.norm(w - p)))
        denom = float(np.linalg.norm(tgt)) or 1.0
        fit.append(float(np.linalg.norm(X[S] @ w - tgt)) / denom)
        off.append(float((X[rest] @ w).max()) if rest.size else -math.inf)
    ok = all(e <= tol for e in proj_err) and all(f <= tol for f in fit) and all(o <= off_tol for o in off)
    return BiasReport(proj_err, fit, off, bool(ok), w1_gap, projs)


def _one_step_gap(traj: Trajectory, dataset: Dataset, w1s) -> float:
    ref = step(traj.initial, dataset, traj.eta).weights
    return float(max(np.linalg.norm(a - b) for a, b in zip(ref, w1s)))


def verify_implicit_bias_single(traj: Trajectory, dataset: Dataset, tol: float = 1e-6, off_tol: float = 1e-9) -> BiasReport:
    eps = traj.beta[0, 0]
    w1 = first_iterate_single(dataset, eps, traj.eta)
    return _bias_report(dataset, traj.final.weights, [w1], [dataset.pos_idx], [dataset.y_pos], tol, off_tol,
                        _one_step_gap(traj, dataset, [w1]))


def verify_implicit_bias_two(traj: Trajectory, dataset: Dataset, tol: float = 1e-6, off_tol: float = 1e-9) -> BiasReport:
    _require_arity(traj, [1, -1])
    w1s = first_iterate_two(dataset, traj.beta[0, 0], traj.beta[0, 1], traj.eta)
    return _bias_report(dataset, traj.final.weights, w1s, [dataset.pos_idx, dataset.neg_idx],
                        [dataset.y_pos, -dataset.y_neg], tol, off_tol, _one_step_gap(traj, dataset, w1s))


def verify_implicit_bias_multi(traj: Trajectory, dataset: Dataset, assignment, tol: float = 1e-6, off_tol: float = 1e-9) -> BiasReport:
    a = check_assignment(dataset.y, assignment, traj.signs)
    # one step in dual coordinates from the logged t = 0 snapshot
    r0 = traj.output()[0] - dataset.y
    alpha1 = traj.alpha[0] - traj.eta * traj.signs[:, None] * (traj.beta[0] > 0) * r0
    W0 = traj.initial.weights
    w1s = list(W0 - dataset.solve_gram(W0 @ dataset.X.T) @ dataset.X + alpha1 @ dataset.X)
    sets = [np.flatnonzero(a == k) for k in range(traj.m)]
    targets = [traj.signs[k] * dataset.y[S] for k, S in enumerate(sets)]
    return _bias_report(dataset, traj.final.weights, w1s, sets, targets, tol, off_tol, _one_step_gap(traj, dataset, w1s))


# distance bounds ---------------------------------------------------------


@dataclass
class BoundReport:
    distance: list
    lower_bound: list
    upper_bound: list
    constants_used: Constants
    context: dict
    flags: list = field(default_factory=list)

    @property
    def within(self) -> bool:
        return all(lo <= d <= up for d, lo, up in zip(self.distance, self.lower_bound, self.upper_bound))

    def to_dict(self) -> dict:
        return {
            "distance": self.distance,
            "lower_bound": self.lower_bound,
            "upper_bound": self.upper_bound,
            "within": self.within,
            "constants_used": self.constants_used.to_dict(),
            "context": self.context,
            "flags": self.flags,
        }


def distance_bounds(count: int, dataset: Dataset, constants: Constants) -> tuple[float, float]:
    """(sqrt(k y_min^2 / (C C_g l1)), sqrt(16 k y_max^2 / (C_g l1))) for k = count."""
    l1 = dataset.spectrum.l1
    lower = math.sqrt(count * dataset.y_min**2 / (constants.C * constants.C_g * l1))
    upper = math.sqrt(16 * count * dataset.y_max**2 / (constants.C_g * l1))
    return lower, upper


def _context(dataset: Dataset) -> dict:
    return {
        "n": dataset.n,
        "n_pos": dataset.n_pos,
        "n_neg": dataset.n_neg,
        "d": dataset.d,
        "l1": dataset.spectrum.l1,
        "y_min": dataset.y_min,
        "y_max": dataset.y_max,
    }


def _flags(lower, upper):
    return ["inverted_bounds"] if lower > upper else []


def bound_report_single(w_inf, dataset: Dataset, constants: Constants, min_norm: MinNormSolution) -> BoundReport:
    dist = float(np.linalg.norm(np.asarray(w_inf).ravel() - min_norm.weights[0]))
    lo, up = distance_bounds(dataset.n_neg, dataset, constants)
    return BoundReport([dist], [lo], [up], constants, _context(dataset), _flags(lo, up))


def bound_report_two(pair_inf, dataset: Dataset, constants: Constants, min_norm_pair: MinNormSolution) -> BoundReport:
    dists = [float(np.linalg.norm(np.asarray(w) - ws)) for w, ws in zip(pair_inf, min_norm_pair.weights)]
    lp, up = distance_bounds(dataset.n_neg, dataset, constants)
    lm, um = distance_bounds(dataset.n_pos, dataset, constants)
    return BoundReport(dists, [lp, lm], [up, um], constants, _context(dataset), _flags(lp, up) + _flags(lm, um))


class SlopeFit(NamedTuple):
    slope: float
    intercept: float
    r2: float


def slope_estimate(points) -> SlopeFit:
    """Least-squares fit of log(error) against log(d)."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 4:
        raise DataError("need at least four (d, error) points")
    if np.any(pts <= 0):
        raise DataError("d and error values must be positive")
    x, y = np.log(pts[:, 0]), np.log(pts[:, 1])
    if np.ptp(y) == 0:
        return SlopeFit(0.0, float(y[0]), 1.0)
    fit = stats.linregress(x, y)
    return SlopeFit(float(fit.slope), float(fit.intercept), float(fit.rvalue**2))


# mechanism checks ----------------------------------------------------------


@dataclass(frozen=True)
class GradientCheck:
    max_rel_error: float
    checked: bool  # False when a preactivation sits too close to a kink
    passed: bool


def finite_difference_check(model: ModelState, dataset: Dataset, h: float = 1e-6, rtol: float = 1e-4) -> GradientCheck:
    """Central differences of the risk along every coordinate of every neuron."""
    X, y = dataset.X, dataset.y
    beta = preactivations(model, X)
    delta = 2 * h * float(np.abs(X).max())
    if np.any(np.abs(beta) <= delta):
        return GradientCheck(math.nan, False, True)
    g = gradient(model, dataset)
    out = model.signs @ relu(beta)
    fd = np.empty_like(g)
    for k in range(model.m):
        rest = out - model.signs[k] * relu(beta[k])
        for sgn, sink in ((1, "plus"), (-1, "minus")):
            shifted = rest[:, None] + model.signs[k] * relu(beta[k][:, None] + sgn * h * X) - y[:, None]
            risk = 0.5 * np.einsum("ij,ij->j", shifted, shifted)
            if sink == "plus":
                fd[k] = risk
            else:
                fd[k] = (fd[k] - risk) / (2 * h)
    floor = max(1e-6 * float(np.abs(g).max()), 1e-12)
    err = float((np.abs(fd - g) / np.maximum(np.abs(g), floor)).max())
    return GradientCheck(err, True, err <= rtol)


def risk_increase_after(traj: Trajectory, t0: int | None) -> float:
    """Largest one-step risk increase at or after t0 (negative if monotone)."""
    if t0 is None:
        return math.inf
    r = traj.risk[traj.t >= t0]
    return float(np.diff(r).max()) if r.size > 1 else -math.inf


def frozen_tolerance(traj: Trajectory, dataset: Dataset) -> float:
    """Roundoff allowance for duals recomputed through the (XX^T) solve."""
    eig = dataset.gram_eigs
    return 64 * np.finfo(float).eps * float(eig[-1] / eig[0]) * float(np.abs(traj.alpha).max())


def mechanism_report(traj: Trajectory, dataset: Dataset) -> dict:
    """Primal-dual consistency, dual update identity, frozen duals, monotone risk, FD gradient."""
    t0 = detect_activation_freeze(traj)
    fd0 = finite_difference_check(traj.initial, dataset)
    fd1 = finite_difference_check(step(traj.initial, dataset, traj.eta), dataset)
    frozen = frozen_dual_check(traj, frozen_tolerance(traj, dataset))
    return {
        "primal_dual_residual": primal_dual_residual(traj, dataset),
        "dual_update_violations": len(dual_update_check(traj, dataset)),
        "frozen_dual_violations": len(frozen),
        "t0": t0,
        "risk_increase_after_t0": risk_increase_after(traj, t0),
        "fd_max_rel_error": max((c.max_rel_error for c in (fd0, fd1) if c.checked), default=math.nan),
        "fd_passed": fd0.passed and fd1.passed,
    }


def mechanism_ok(report: dict) -> bool:
    return (
        report["primal_dual_residual"] <= 1e-8
        and report["dual_update_violations"] == 0
        and report["frozen_dual_violations"] == 0
        and report["risk_increase_after_t0"] <= 1e-12
        and report["fd_passed"]
    )


def homogeneity_check(state: ModelState, dataset: Dataset, eta: float, iters: int, c: float = 2.0) -> bool:
    """Rerun with (c y, c w^0) for the same number of steps; masks must coincide."""
    scaled = Dataset(dataset.X, c * dataset.y, dataset.spectrum, dataset.seed, dataset.z_dist)
    rule = StopRule(max_iters=iters, grad_tol=0.0)
    base = run(state, dataset, eta, rule)
    twin = run(state.with_weights(c * state.weights), scaled, eta, rule)
    return base.masks.shape == twin.masks.shape and bool(np.array_equal(base.masks, twin.masks))
