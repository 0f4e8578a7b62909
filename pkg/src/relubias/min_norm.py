"""Minimum-norm interpolants for linear, single-ReLU and two-ReLU models.

The exact solvers enumerate activation subsets or partitions and certify each
candidate with KKT conditions. ``projected_gradient_qp`` solves the same
convex programs by a completely different route (projected gradient on the
dual) and serves as the oracle.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import linalg, optimize

from .relu_model import relu
from .spectral_data import DataError, Dataset

FEAS_TOL = 1e-9
SIGN_TOL = 1e-9
TIE_TOL = 1e-10
SINGLE_CAP = 16
TWO_CAP = 14
ENUM_MAX_INEQ = 8


class InfeasibleError(DataError):
    pass


@dataclass
class MinNormSolution:
    weights: list
    objective: float
    certificate: tuple
    multipliers: dict
    kkt_residual: float
    solver: str = "enumeration"
    ties: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "objective": self.objective,
            "weights": [np.asarray(w).tolist() for w in self.weights],
            "subset_or_partition": [list(map(int, c)) for c in self.certificate]
            if self.certificate and isinstance(self.certificate[0], tuple)
            else list(map(int, self.certificate)),
            "multipliers": {k: np.asarray(v).tolist() for k, v in self.multipliers.items()},
            "kkt_residual": self.kkt_residual,
            "solver": self.solver,
        }

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), sort_keys=True))
        return path


def _solve_pd(K: np.ndarray, b: np.ndarray) -> np.ndarray | None:
    """Solve K x = b for symmetric K, or None if K is (numerically) singular."""
    if K.size == 0:
        return np.zeros(0)
    try:
        cho = linalg.cho_factor(K, lower=True, check_finite=False)
    except linalg.LinAlgError:
        return None
    diag = np.diag(cho[0]) ** 2
    if diag.min() <= 1e-13 * max(diag.max(), 1e-300):
        return None
    return linalg.cho_solve(cho, b, check_finite=False)


def linear_mni(X_S: np.ndarray, y_S: np.ndarray) -> np.ndarray:
    """X_S^T (X_S X_S^T)^{-1} y_S."""
    X_S = np.atleast_2d(np.asarray(X_S, dtype=float))
    y_S = np.atleast_1d(np.asarray(y_S, dtype=float))
    if X_S.shape[0] == 0:
        return np.zeros(X_S.shape[1])
    c = _solve_pd(X_S @ X_S.T, y_S)
    if c is None:
        raise DataError("X_S is rank deficient")
    return X_S.T @ c


@dataclass
class QPResult:
    nu: np.ndarray  # multipliers: first the equality rows, then all inequality rows
    active: tuple
    p: int

    @property
    def lam(self) -> np.ndarray:
        return self.nu[: self.p]

    @property
    def mu(self) -> np.ndarray:
        return self.nu[self.p :]


def _certify(K, b, p, J, tol):
    """Closed-form solve with inequalities J held at equality; None unless KKT holds."""
    idx = np.concatenate([np.arange(p), p + np.asarray(J, dtype=int)])
    rhs = np.concatenate([b, np.zeros(len(J))])
    sol = _solve_pd(K[np.ix_(idx, idx)], rhs)
    if sol is None:
        return None
    nu_J = -sol
    q = K.shape[0] - p
    if q:
        g = -K[p:, idx] @ nu_J  # G w
        if g.max() > tol or (len(J) and nu_J[p:].min() < -tol):
            return None
    nu = np.zeros(K.shape[0])
    nu[idx] = nu_J
    return QPResult(nu, tuple(int(j) for j in J), p)


def _enumerate(K, b, p, tol):
    q = K.shape[0] - p
    for size in range(q + 1):
        for J in itertools.combinations(range(q), size):
            res = _certify(K, b, p, J, tol)
            if res is not None:
                return res
    return None


def _nnls_active(K, b, p, tol):
    """Guess the active set from the reduced dual, solved as an NNLS problem."""
    q = K.shape[0] - p
    if q == 0:
        return _certify(K, b, p, (), tol)
    Kee, Kei, Kii = K[:p, :p], K[:p, p:], K[p:, p:]
    if p:
        sol = _solve_pd(Kee, np.column_stack([b, Kei]))
        if sol is None:
            return None
        S = Kii - Kei.T @ sol[:, 1:]
        g = -Kei.T @ sol[:, 0]
    else:
        S, g = Kii, np.zeros(q)
    try:
        L = linalg.cholesky(0.5 * (S + S.T), lower=True)
    except linalg.LinAlgError:
        return None
    mu, _ = optimize.nnls(L.T, -linalg.solve_triangular(L, g, lower=True))
    scale = max(mu.max(initial=0.0), 1e-300)
    J = np.flatnonzero(mu > 1e-12 * scale)
    return _certify(K, b, p, J, tol)


def _qp_gram(K, b, p, tol=FEAS_TOL, method="auto") -> QPResult:
    """Solve min 1/2|w|^2 s.t. M_eq w = b, M_in w <= 0 given K = M M^T.

    The optimum is w = -M^T nu with nu from the returned result.
    """
    q = K.shape[0] - p
    if method not in ("auto", "enumerate", "active_set"):
        raise ValueError(f"unknown method {method!r}")
    res = None
    if method == "active_set" or (method == "auto" and q > ENUM_MAX_INEQ):
        res = _nnls_active(K, b, p, tol)
    if res is None:
        res = _enumerate(K, b, p, tol)
    if res is None:
        raise InfeasibleError("no active set satisfies the KKT conditions")
    return res


def eq_ineq_qp(A_eq, b_eq, G_ineq, tol: float = FEAS_TOL, method: str = "auto"):
    """Minimise 1/2 |w|^2 subject to A_eq w = b_eq and G_ineq w <= 0.

    Returns (w, lam, mu, active) with w = -A_eq^T lam - G_ineq^T mu, mu >= 0.
    """
    A = np.asarray(A_eq, dtype=float)
    G = np.asarray(G_ineq, dtype=float)
    width = A.shape[1] if A.size else G.shape[1]
    A = A.reshape(-1, width)
    G = G.reshape(-1, width)
    M = np.vstack([A, G])
    res = _qp_gram(M @ M.T, np.asarray(b_eq, dtype=float).reshape(-1), A.shape[0], tol, method)
    return -M.T @ res.nu, res.lam, res.mu, res.active


def projected_gradient_qp(A_eq, b_eq, G_ineq, max_iter: int = 200_000, tol: float = 1e-13):
    """Accelerated projected gradient on the dual of min 1/2|w|^2, A w = b, G w <= 0.

    Returns (w, lam, mu, iterations).
    """
    A = np.atleast_2d(np.asarray(A_eq, dtype=float))
    G = np.atleast_2d(np.asarray(G_ineq, dtype=float))
    width = max(A.shape[1], G.shape[1])
    A = A.reshape(-1, width)
    G = G.reshape(-1, width)
    b = np.asarray(b_eq, dtype=float).reshape(-1)
    p = A.shape[0]
    M = np.vstack([A, G])
    K = M @ M.T
    c = np.concatenate([b, np.zeros(G.shape[0])])
    L = float(np.linalg.eigvalsh(K)[-1]) if K.size else 1.0
    step = 1.0 / L

    def project(v):
        v[p:] = np.maximum(v[p:], 0.0)
        return v

    nu = np.zeros(K.shape[0])
    z, theta = nu.copy(), 1.0
    it = 0
    for it in range(1, max_iter + 1):
        nxt = project(z - step * (K @ z + c))
        # restart momentum whenever it points uphill
        if (nxt - nu) @ (K @ nxt + c) > 0:
            theta = 1.0
            z = nu.copy()
            continue
        th_next = 0.5 * (1 + np.sqrt(1 + 4 * theta**2))
        z = nxt + ((theta - 1) / th_next) * (nxt - nu)
        delta = np.linalg.norm(nxt - nu)
        nu, theta = nxt, th_next
        if delta <= tol * (1 + np.linalg.norm(nu)):
            break
    return -M.T @ nu, nu[:p], nu[p:], it


# single ReLU -----------------------------------------------------------


def kkt_residual_single(dataset: Dataset, w, lam, mu) -> float:
    """Largest violation among stationarity, feasibility, sign and slackness."""
    Xp, Xn = dataset.X_pos, dataset.X_neg
    w = np.asarray(w)
    parts = [
        np.linalg.norm(w + Xp.T @ lam + Xn.T @ mu),
        np.abs(Xp @ w - dataset.y_pos).max(initial=0.0),
        np.maximum(Xn @ w, 0).max(initial=0.0),
        np.maximum(-np.asarray(mu), 0).max(initial=0.0),
        np.abs(mu * (Xn @ w)).max(initial=0.0),
    ]
    return float(max(parts))


def min_norm_single(dataset: Dataset, tol: float = FEAS_TOL, cap: int = SINGLE_CAP, fallback: bool = False) -> MinNormSolution:
    """min 1/2|w|^2 s.t. w.x_i = y_i on positives and w.x_j <= 0 on negatives.

    Enumerates T within the negatives; each candidate is the linear MNI on
    positives + T with zero labels on T, accepted when it is feasible and the
    multipliers on T are nonnegative.
    """
    n_pos, n = dataset.n_pos, dataset.n
    neg = list(range(n_pos, n))
    if len(neg) > cap:
        if not fallback:
            raise DataError(f"{len(neg)} negatives exceed the enumeration cap {cap}")
        w, lam, mu, active = eq_ineq_qp(dataset.X_pos, dataset.y_pos, dataset.X_neg, tol, "active_set")
        subset = tuple(range(n_pos)) + tuple(n_pos + j for j in active)
        return MinNormSolution([w], 0.5 * float(w @ w), subset, {"lambda": lam, "mu": mu},
                               kkt_residual_single(dataset, w, lam, mu), "active_set")

    K = dataset.gram
    ytil = np.where(dataset.y > 0, dataset.y, 0.0)
    accepted = []
    for size in range(len(neg) + 1):
        for T in itertools.combinations(neg, size):
            S = list(range(n_pos)) + list(T)
            c = _solve_pd(K[np.ix_(S, S)], ytil[S])
            if c is None:
                continue
            pred = K[:, S] @ c
            outside = [j for j in neg if j not in T]
            if outside and pred[outside].max() > tol:
                continue
            if T and (-c[n_pos:]).min() < -tol:
                continue
            accepted.append((0.5 * float(ytil[S] @ c), tuple(S), c))
    if not accepted:
        raise InfeasibleError("no subset certified; X may be rank deficient")
    best = min(a[0] for a in accepted)
    ties = sorted(a for a in accepted if a[0] <= best + TIE_TOL)
    obj, S, c = min(ties, key=lambda a: a[1])
    w = dataset.X[list(S)].T @ c
    lam = -c[:n_pos]
    mu = np.zeros(len(neg))
    mu[[j - n_pos for j in S[n_pos:]]] = -c[n_pos:]
    return MinNormSolution([w], obj, S, {"lambda": lam, "mu": mu},
                           kkt_residual_single(dataset, w, lam, mu), "enumeration",
                           [a[1] for a in ties])


def min_norm_single_pg(dataset: Dataset, max_iter: int = 200_000) -> MinNormSolution:
    """Oracle: the single-ReLU program solved by dual projected gradient."""
    w, lam, mu, _ = projected_gradient_qp(dataset.X_pos, dataset.y_pos, dataset.X_neg, max_iter)
    S = tuple(range(dataset.n_pos)) + tuple(dataset.n_pos + j for j in np.flatnonzero(mu > 1e-9))
    return MinNormSolution([w], 0.5 * float(w @ w), S, {"lambda": lam, "mu": mu},
                           kkt_residual_single(dataset, w, lam, mu), "projected_gradient")


# two ReLU --------------------------------------------------------------

# per pattern: (eq coefficient on w+, on w-), (ineq coefficient on w+, on w-)
# 1: w+.x = y, w-.x <= 0      2: w+.x - w-.x = y, -w-.x <= 0   (positives)
# 3: -w-.x = y, w+.x <= 0     4: w+.x - w-.x = y, -w+.x <= 0   (negatives)
_PATTERN = {
    1: ((1.0, 0.0), (0.0, 1.0)),
    2: ((1.0, -1.0), (0.0, -1.0)),
    3: ((0.0, -1.0), (1.0, 0.0)),
    4: ((1.0, -1.0), (-1.0, 0.0)),
}


def restricted_program(dataset: Dataset, partition) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Row coefficients (eq, ineq) on (w+, w-) per example and the label vector.

    ``partition[i]`` in {1, 2} for positive examples and {3, 4} for negatives.
    Returns coef of shape (2n, 2), example index of each row and b.
    """
    n = dataset.n
    part = np.asarray(partition, dtype=int)
    if part.shape != (n,):
        raise DataError("partition needs one pattern per example")
    pos = dataset.y > 0
    if np.any(pos & ~np.isin(part, (1, 2))) or np.any(~pos & ~np.isin(part, (3, 4))):
        raise DataError("positives take patterns 1/2 and negatives 3/4")
    eq = np.array([_PATTERN[k][0] for k in part])
    ineq = np.array([_PATTERN[k][1] for k in part])
    return np.vstack([eq, ineq]), np.concatenate([np.arange(n), np.arange(n)]), dataset.y.copy()


def restricted_matrices(dataset: Dataset, partition):
    """Explicit (A_eq, b_eq, G) over the stacked variable (w+, w-)."""
    coef, rows, b = restricted_program(dataset, partition)
    X = dataset.X[rows]
    M = np.hstack([coef[:, :1] * X, coef[:, 1:] * X])
    n = dataset.n
    return M[:n], b, M[n:]


def _partitions(n_pos: int, n_neg: int):
    for bits in itertools.product((0, 1), repeat=n_pos + n_neg):
        yield tuple(1 + b for b in bits[:n_pos]) + tuple(3 + b for b in bits[n_pos:])


def kkt_residual_two(dataset: Dataset, weights, partition, delta, mu) -> float:
    coef, rows, b = restricted_program(dataset, partition)
    n = dataset.n
    X = dataset.X
    wp, wm = weights
    nu = np.concatenate([delta, mu])
    stat = np.linalg.norm(wp + X.T @ (nu * coef[:, 0])[:n] + X.T @ (nu * coef[:, 0])[n:]) + np.linalg.norm(
        wm + X.T @ (nu * coef[:, 1])[:n] + X.T @ (nu * coef[:, 1])[n:]
    )
    P = np.stack([X @ wp, X @ wm], axis=1)
    g = (coef * P[rows]).sum(axis=1)
    parts = [
        stat,
        np.abs(g[:n] - b).max(initial=0.0),
        np.maximum(g[n:], 0).max(initial=0.0),
        np.maximum(-np.asarray(mu), 0).max(initial=0.0),
        np.abs(mu * g[n:]).max(initial=0.0),
    ]
    return float(max(parts))


def solve_restricted(dataset: Dataset, partition, tol: float = FEAS_TOL, method: str = "auto"):
    """Solve one restricted convex program. Returns (w+, w-, delta, mu, objective)."""
    coef, rows, b = restricted_program(dataset, partition)
    K = dataset.gram[np.ix_(rows, rows)] * (coef @ coef.T)
    res = _qp_gram(K, b, dataset.n, tol, method)
    cp = np.zeros(dataset.n)
    cm = np.zeros(dataset.n)
    np.add.at(cp, rows, -res.nu * coef[:, 0])
    np.add.at(cm, rows, -res.nu * coef[:, 1])
    Kx = dataset.gram
    obj = 0.5 * float(cp @ Kx @ cp + cm @ Kx @ cm)
    return dataset.X.T @ cp, dataset.X.T @ cm, res.lam, res.mu, obj


def original_residual_two(dataset: Dataset, wp, wm) -> np.ndarray:
    """|relu(w+.x_i) - relu(w-.x_i) - y_i| for every example."""
    return np.abs(relu(dataset.X @ wp) - relu(dataset.X @ wm) - dataset.y)


def min_norm_two(dataset: Dataset, tol: float = FEAS_TOL, cap: int = TWO_CAP, method: str = "auto") -> MinNormSolution:
    """Minimum-norm pair over all activation partitions of the two-ReLU program."""
    if dataset.n > cap:
        raise DataError(f"n={dataset.n} exceeds the partition cap {cap}")
    best = None
    ties = []
    for part in _partitions(dataset.n_pos, dataset.n_neg):
        try:
            wp, wm, delta, mu, obj = solve_restricted(dataset, part, tol, method)
        except InfeasibleError:
            continue
        if np.any(original_residual_two(dataset, wp, wm) > 1e-8 * (1 + np.abs(dataset.y))):
            continue
        if best is None or obj < best[0] - TIE_TOL:
            best = (obj, part, wp, wm, delta, mu)
            ties = [part]
        elif obj <= best[0] + TIE_TOL:
            ties.append(part)
            if part < best[1]:
                best = (obj, part, wp, wm, delta, mu)
    if best is None:
        raise InfeasibleError("no partition yields a feasible pair")
    obj, part, wp, wm, delta, mu = best
    return MinNormSolution([wp, wm], obj, part, {"delta": delta, "mu": mu},
                           kkt_residual_two(dataset, (wp, wm), part, delta, mu), "enumeration", sorted(ties))


def partition_sets(partition) -> dict:
    """Map pattern labels to the index sets S1..S4."""
    part = np.asarray(partition)
    return {f"S{k}": np.flatnonzero(part == k).tolist() for k in (1, 2, 3, 4)}


def feasible_witness_two(dataset: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """(X^T (XX^T)^{-1} y+, X^T (XX^T)^{-1} y-) with y+ = max(y,0), y- = -min(y,0)."""
    yp = np.maximum(dataset.y, 0.0)
    ym = -np.minimum(dataset.y, 0.0)
    coef = dataset.solve_gram(np.vstack([yp, ym]))
    W = coef @ dataset.X
    return W[0], W[1]


def feasible_upper_bound_multi(dataset: Dataset, m: int, signs) -> float:
    """Objective of the two-neuron witness, an upper bound for the m-neuron program."""
    s = np.asarray(signs, dtype=float)
    if s.size != m:
        raise DataError("need one sign per neuron")
    if dataset.n_pos and not np.any(s > 0):
        raise DataError("positive labels need a positive neuron")
    if dataset.n_neg and not np.any(s < 0):
        raise DataError("negative labels need a negative neuron")
    wp, wm = feasible_witness_two(dataset)
    return 0.5 * float(wp @ wp + wm @ wm)
