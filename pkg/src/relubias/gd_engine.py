"""Full-batch gradient descent with primal-dual bookkeeping.

For each neuron the primal variable is beta_k = X w_k and the dual variable
alpha_k solves (XX^T) alpha_k = beta_k.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .relu_model import ModelState, output_from_beta, preactivations, relu
from .spectral_data import Constants, DataError, Dataset, default_constants

INIT_KINDS = ("single_eps", "two_eps", "multi_disjoint", "random")


class DivergenceError(RuntimeError):
    pass


def _eps_vector(eps, n: int, name: str) -> np.ndarray:
    e = np.broadcast_to(np.asarray(eps, dtype=float), (n,)).copy()
    if not np.all(e > 0):
        raise DataError(f"{name} entries must be strictly positive")
    return e


def _from_dual(dataset: Dataset, targets: np.ndarray) -> np.ndarray:
    """Weights X^T (XX^T)^{-1} t for each row t of ``targets``."""
    return dataset.solve_gram(np.atleast_2d(targets)) @ dataset.X


def init_single(dataset: Dataset, eps=None, constants: Constants | None = None) -> ModelState:
    constants = constants or default_constants(dataset)
    if eps is None:
        eps = dataset.y_min / (2 * constants.C_alpha)
    eps = _eps_vector(eps, dataset.n, "eps")
    if np.any(eps > dataset.y_min / constants.C_alpha):
        warnings.warn("eps exceeds y_min / C_alpha", stacklevel=2)
    return ModelState(_from_dual(dataset, eps), [1.0])


def init_two(dataset: Dataset, eps_plus=None, eps_minus=None, constants: Constants | None = None) -> ModelState:
    constants = constants or default_constants(dataset)
    default = dataset.y_min / (4 * constants.C_alpha)
    ep = _eps_vector(default if eps_plus is None else eps_plus, dataset.n, "eps_plus")
    em = _eps_vector(default if eps_minus is None else eps_minus, dataset.n, "eps_minus")
    if max(ep.max(), em.max()) > dataset.y_min / (2 * constants.C_alpha):
        warnings.warn("eps exceeds y_min / (2 C_alpha)", stacklevel=2)
    return ModelState(_from_dual(dataset, np.vstack([ep, em])), [1.0, -1.0])


def assignment_matrices(y: np.ndarray, assignment: np.ndarray, signs: np.ndarray) -> np.ndarray:
    """Diagonals of A_k as an m x n array.

    Entry (k, i) is 0 when a_i = k or s_k y_i < 0, and -sign(y_i) otherwise.
    """
    y = np.asarray(y, dtype=float)
    a = np.asarray(assignment)
    s = np.asarray(signs, dtype=float)
    A = np.tile(-np.sign(y), (s.size, 1))
    A[a, np.arange(y.size)] = 0.0
    A[s[:, None] * y[None, :] < 0] = 0.0
    return A


def check_assignment(y: np.ndarray, assignment, signs) -> np.ndarray:
    a = np.asarray(assignment, dtype=int)
    s = np.asarray(signs, dtype=float)
    if a.shape != np.shape(y) or np.any(a < 0) or np.any(a >= s.size):
        raise DataError("assignment must map each example to a neuron index")
    if np.any(s[a] * np.asarray(y) <= 0):
        raise DataError("each example must be assigned to a neuron whose sign matches its label")
    return a


def random_assignment(y: np.ndarray, signs, rng: np.random.Generator) -> np.ndarray:
    s = np.asarray(signs, dtype=float)
    pos, neg = np.flatnonzero(s > 0), np.flatnonzero(s < 0)
    out = np.empty(len(y), dtype=int)
    for i, yi in enumerate(y):
        pool = pos if yi > 0 else neg
        if pool.size == 0:
            raise DataError("no neuron with a sign matching a label")
        out[i] = rng.choice(pool)
    return out


def init_multi_disjoint(
    dataset: Dataset,
    assignment,
    signs,
    C_g_hat: float | None = None,
    eps=None,
    constants: Constants | None = None,
) -> ModelState:
    constants = constants or default_constants(dataset)
    s = np.asarray(signs, dtype=float)
    m = s.size
    a = check_assignment(dataset.y, assignment, s)
    cg = constants.C_g if C_g_hat is None else float(C_g_hat)
    cap = dataset.y_min / (constants.C_alpha * m)
    if eps is None:
        eps = np.full((m, dataset.n), dataset.y_min / (2 * constants.C_alpha * m))
    eps = np.broadcast_to(np.asarray(eps, dtype=float), (m, dataset.n))
    if not np.all(eps > 0):
        raise DataError("eps entries must be strictly positive")
    if np.any(eps > cap):
        warnings.warn("eps exceeds y_min / (C_alpha m)", stacklevel=2)
    A = assignment_matrices(dataset.y, a, s)
    return ModelState(_from_dual(dataset, A * dataset.y / cg + eps), s)


def init_random(dataset: Dataset, m: int, signs, scale: float, seed: int = 0) -> ModelState:
    if scale <= 0:
        raise DataError("scale must be positive")
    rng = np.random.default_rng(seed)
    return ModelState(scale * rng.standard_normal((m, dataset.d)), signs)


@dataclass(frozen=True)
class InitSpec:
    kind: str
    eps: object = None
    eps_minus: object = None
    assignment: object = None
    signs: tuple = ()
    scale: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.kind not in INIT_KINDS:
            raise DataError(f"unknown init kind {self.kind!r}")


def initialize(spec: InitSpec, dataset: Dataset, constants: Constants | None = None) -> ModelState:
    if spec.kind == "single_eps":
        return init_single(dataset, spec.eps, constants)
    if spec.kind == "two_eps":
        return init_two(dataset, spec.eps, spec.eps_minus, constants)
    if spec.kind == "multi_disjoint":
        return init_multi_disjoint(dataset, spec.assignment, spec.signs, eps=spec.eps, constants=constants)
    return init_random(dataset, len(spec.signs), spec.signs, spec.scale, spec.seed)


class StepSize(NamedTuple):
    eta: float
    eta_lo: float
    eta_hi: float


def recommend_step_size(dataset: Dataset, constants: Constants | None = None) -> StepSize:
    """eta_hi = 1/mu_1(XX^T), eta_lo = eta_hi / C, default eta = eta_hi / 2."""
    constants = constants or default_constants(dataset)
    mu1 = float(dataset.gram_eigs[-1])
    if mu1 <= 0:
        raise DataError("X has zero spectral norm")
    hi = 1.0 / mu1
    return StepSize(hi / 2, hi / constants.C, hi)


def theory_window(dataset: Dataset, constants: Constants) -> tuple[float, float]:
    """Step-size interval [1/(C C_g l1), 1/(C_g l1)] assumed by the convergence guarantees."""
    top = 1.0 / (constants.C_g * dataset.spectrum.l1)
    return top / constants.C, top


def step(state: ModelState, dataset: Dataset, eta: float) -> ModelState:
    if eta <= 0:
        raise DataError("eta must be positive")
    beta = preactivations(state, dataset.X)
    r = output_from_beta(beta, state.signs) - dataset.y
    G = (state.signs[:, None] * (beta > 0) * r) @ dataset.X
    W = state.weights - eta * G
    if not np.all(np.isfinite(W)):
        raise DivergenceError(f"non-finite weights at iteration {state.iter + 1}")
    return state.with_weights(W, state.iter + 1)


def primal_dual(state: ModelState, dataset: Dataset) -> tuple[np.ndarray, np.ndarray]:
    beta = preactivations(state, dataset.X)
    return beta, dataset.solve_gram(beta)


@dataclass(frozen=True)
class StopRule:
    max_iters: int | None = None
    grad_tol: float | None = None
    risk_tol: float | None = None

    def resolve(self, dataset: Dataset, eta: float) -> "StopRule":
        max_iters = self.max_iters
        if max_iters is None:
            # ten times the iterations needed to shrink the slowest mode by 1e-10
            rate = eta * float(dataset.gram_eigs[0])
            max_iters = 10 * math.ceil(math.log(1e10) / min(rate, 1.0))
        grad_tol = self.grad_tol if self.grad_tol is not None else 1e-10 * float(np.linalg.norm(dataset.y))
        return StopRule(int(max_iters), grad_tol, self.risk_tol)


@dataclass
class Trajectory:
    t: np.ndarray  # T
    beta: np.ndarray  # T x m x n
    alpha: np.ndarray  # T x m x n
    risk: np.ndarray  # T
    grad_norm: np.ndarray  # T
    signs: np.ndarray
    eta: float
    initial: ModelState | None
    final: ModelState | None
    stop_reason: str
    stride: int = 1
    extra: dict = field(default_factory=dict)

    @property
    def masks(self) -> np.ndarray:
        return self.beta > 0

    @property
    def m(self) -> int:
        return self.beta.shape[1]

    @property
    def n(self) -> int:
        return self.beta.shape[2]

    @property
    def iters(self) -> int:
        return int(self.t[-1])

    def output(self) -> np.ndarray:
        """h^t(X) at every logged step, T x n."""
        return np.einsum("k,tkn->tn", self.signs, relu(self.beta))

    def summary(self) -> dict:
        return {
            "t0": detect_activation_freeze(self),
            "final_risk": float(self.risk[-1]),
            "iters": self.iters,
            "eta": self.eta,
            "stop_reason": self.stop_reason,
            "signs": [int(v) for v in self.signs],
        }


def run(
    state: ModelState,
    dataset: Dataset,
    eta: float,
    stop: StopRule | None = None,
    stride: int = 1,
) -> Trajectory:
    """Iterate ``step`` until the gradient norm drops below grad_tol or max_iters."""
    if eta <= 0:
        raise DataError("eta must be positive")
    stop = (stop or StopRule()).resolve(dataset, eta)
    X, y, s = dataset.X, dataset.y, state.signs
    W = np.array(state.weights)
    ts, betas, risks, gnorms = [], [], [], []
    reason = "max_iters"
    it = state.iter
    for k in range(stop.max_iters + 1):
        beta = W @ X.T
        r = s @ relu(beta) - y
        risk = 0.5 * float(r @ r)
        if not math.isfinite(risk) or not np.all(np.isfinite(beta)):
            reason = "diverged"
            break
        G = (s[:, None] * (beta > 0) * r) @ X
        gn = float(np.linalg.norm(G))
        done = gn <= stop.grad_tol or (stop.risk_tol is not None and risk <= stop.risk_tol)
        if k % stride == 0 or done or k == stop.max_iters:
            ts.append(it)
            betas.append(beta)
            risks.append(risk)
            gnorms.append(gn)
            last_W = W
        if done:
            reason = "grad_tol" if gn <= stop.grad_tol else "risk_tol"
            break
        if k == stop.max_iters:
            break
        W = W - eta * G
        it += 1
    if not ts:
        raise DivergenceError("initial state is not finite")
    beta = np.array(betas)
    alpha = dataset.solve_gram(beta.reshape(-1, dataset.n)).reshape(beta.shape)
    return Trajectory(
        t=np.array(ts),
        beta=beta,
        alpha=alpha,
        risk=np.array(risks),
        grad_norm=np.array(gnorms),
        signs=np.array(s),
        eta=float(eta),
        initial=state,
        final=state.with_weights(last_W, ts[-1]),
        stop_reason=reason,
        stride=stride,
    )


def _require_stride_one(traj: Trajectory):
    if traj.stride != 1 or np.any(np.diff(traj.t) != 1):
        raise DataError("this check needs a trajectory logged at every iteration")


def detect_activation_freeze(traj: Trajectory) -> int | None:
    """Smallest logged t after which the activation masks never change."""
    _require_stride_one(traj)
    masks = traj.masks
    if len(masks) >= 2 and not np.array_equal(masks[-1], masks[-2]):
        return None
    same = np.all(masks == masks[-1], axis=(1, 2))
    idx = len(same)
    while idx > 0 and same[idx - 1]:
        idx -= 1
    return int(traj.t[idx])


@dataclass(frozen=True)
class Violation:
    t: int
    neuron: int
    example: int
    error: float


def dual_update_check(traj: Trajectory, dataset: Dataset, tol: float = 1e-8) -> list[Violation]:
    """Compare alpha^{t+1} - alpha^t with -eta s_k D(beta^t)(h^t - y) entrywise."""
    _require_stride_one(traj)
    r = traj.output() - dataset.y
    expected = -traj.eta * traj.signs[None, :, None] * (traj.beta > 0) * r[:, None, :]
    err = np.abs(np.diff(traj.alpha, axis=0) - expected[:-1])
    return [Violation(int(traj.t[t]), int(k), int(i), float(err[t, k, i])) for t, k, i in zip(*np.nonzero(err > tol))]


def frozen_dual_check(traj: Trajectory, tol: float = 0.0) -> list[Violation]:
    """Entries with beta_{k,j}^t <= 0 whose dual moved by more than ``tol``."""
    _require_stride_one(traj)
    moved = np.abs(np.diff(traj.alpha, axis=0))
    bad = (traj.beta[:-1] <= 0) & (moved > tol)
    return [Violation(int(traj.t[t]), int(k), int(i), float(moved[t, k, i])) for t, k, i in zip(*np.nonzero(bad))]


def primal_dual_residual(traj: Trajectory, dataset: Dataset) -> float:
    """max over logged t and k of ||beta_k - XX^T alpha_k|| / (1 + ||beta_k||)."""
    res = traj.beta - traj.alpha @ dataset.gram
    return float((np.linalg.norm(res, axis=2) / (1 + np.linalg.norm(traj.beta, axis=2))).max())


TRAJECTORY_HEADER = ["t", "neuron", "example", "beta", "alpha", "active", "risk"]


def write_trajectory_csv(traj: Trajectory, path) -> Path:
    path = Path(path)
    T, m, n = traj.beta.shape
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_HEADER)
        for r in range(T):
            risk = repr(float(traj.risk[r]))
            for k in range(m):
                for i in range(n):
                    b = float(traj.beta[r, k, i])
                    w.writerow([int(traj.t[r]), k, i, repr(b), repr(float(traj.alpha[r, k, i])), int(b > 0), risk])
    return path


def read_trajectory_csv(path, eta: float, signs) -> Trajectory:
    """Rebuild the logged part of a trajectory; raises DataError on schema problems."""
    signs = np.asarray(signs, dtype=float)
    m = signs.size
    try:
        with Path(path).open(newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(str(exc)) from exc
    if not rows or rows[0] != TRAJECTORY_HEADER:
        raise DataError("trajectory header mismatch")
    body = rows[1:]
    if not body or any(len(r) != len(TRAJECTORY_HEADER) for r in body):
        raise DataError("trajectory is empty or has rows of the wrong width")
    try:
        t = np.array([int(r[0]) for r in body])
        k = np.array([int(r[1]) for r in body])
        i = np.array([int(r[2]) for r in body])
        vals = np.array([[float(r[3]), float(r[4]), float(r[6])] for r in body])
        active = np.array([int(r[5]) for r in body])
    except (ValueError, IndexError) as exc:
        raise DataError(f"malformed trajectory row: {exc}") from exc
    n = int(i.max()) + 1
    times = np.unique(t)
    if len(body) != times.size * m * n:
        raise DataError(f"expected {times.size * m * n} rows, found {len(body)} (truncated?)")
    shape = (times.size, m, n)
    exp_t = np.repeat(times, m * n)
    exp_k = np.tile(np.repeat(np.arange(m), n), times.size)
    exp_i = np.tile(np.arange(n), times.size * m)
    if not (np.array_equal(t, exp_t) and np.array_equal(k, exp_k) and np.array_equal(i, exp_i)):
        raise DataError("trajectory rows are out of order or incomplete")
    beta = vals[:, 0].reshape(shape)
    if not np.array_equal(active.reshape(shape), (beta > 0).astype(int)):
        raise DataError("active column disagrees with beta")
    stride = int(np.diff(times).min()) if times.size > 1 else 1
    return Trajectory(
        t=times,
        beta=beta,
        alpha=vals[:, 1].reshape(shape),
        risk=vals[:, 2].reshape(shape)[:, 0, 0],
        grad_norm=np.full(times.size, np.nan),
        signs=signs,
        eta=float(eta),
        initial=None,
        final=None,
        stop_reason="loaded",
        stride=stride,
    )
