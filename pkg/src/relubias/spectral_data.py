"""Synthetic datasets drawn from the feature model x = V Lambda^{1/2} z.

Rows are stored with positive labels first, then negative labels.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import linalg

Z_DISTS = ("gaussian", "rademacher", "uniform_unit_var")
MAX_RESAMPLES = 5
RANK_RTOL = 1e-10
FALLBACK_CG = 3.0


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class Spectrum:
    lam: np.ndarray
    kind: str = "explicit"

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float)
        if lam.ndim != 1 or lam.size == 0:
            raise DataError("spectrum must be a non-empty vector")
        if np.any(lam < 0) or not np.any(lam > 0):
            raise DataError("eigenvalues must be nonnegative with at least one positive")
        if np.any(np.diff(lam) > 0):
            raise DataError("eigenvalues must be sorted in descending order")
        lam.setflags(write=False)
        object.__setattr__(self, "lam", lam)

    @property
    def d(self) -> int:
        return self.lam.size

    @property
    def l1(self) -> float:
        return float(self.lam.sum())

    @property
    def l2(self) -> float:
        return float(np.sqrt(np.dot(self.lam, self.lam)))

    @property
    def linf(self) -> float:
        return float(self.lam[0])

    @property
    def d2(self) -> float:
        r = self.lam / self.lam[0]  # scale-free, avoids underflow for tiny spectra
        return float(r.sum() ** 2 / np.dot(r, r))

    @property
    def dinf(self) -> float:
        return float((self.lam / self.lam[0]).sum())

    def to_dict(self) -> dict:
        return {"kind": self.kind, "lambda": self.lam.tolist()}

    @classmethod
    def from_dict(cls, obj: dict) -> "Spectrum":
        return cls(np.asarray(obj["lambda"], dtype=float), obj.get("kind", "explicit"))


def make_spectrum(kind: str, d: int | None = None, params=()) -> Spectrum:
    """Build an isotropic, geometric (lambda_j = rho^j) or explicit spectrum."""
    params = list(params)
    if kind == "explicit":
        lam = np.asarray(params, dtype=float)
        if d is not None and lam.size != d:
            raise DataError(f"explicit spectrum has {lam.size} entries, expected {d}")
        return Spectrum(lam, "explicit")
    if d is None or d < 1:
        raise DataError("d must be a positive integer")
    if kind == "isotropic":
        scale = float(params[0]) if params else 1.0
        return Spectrum(np.full(d, scale), "isotropic")
    if kind == "geometric":
        if not params:
            raise DataError("geometric spectrum needs a ratio")
        rho = float(params[0])
        if not 0 < rho <= 1:
            raise DataError("geometric ratio must lie in (0, 1]")
        return Spectrum(rho ** np.arange(d, dtype=float), "geometric")
    raise DataError(f"unknown spectrum kind {kind!r}")


def effective_dims(spectrum: Spectrum) -> tuple[float, float]:
    return spectrum.d2, spectrum.dinf


@dataclass(frozen=True)
class LabelSpec:
    """Label magnitudes in [y_min, y_max] with independent random signs.

    ``frac_positive`` is the probability of a positive sign. With
    ``both_signs`` the sign draw is repeated until both signs occur.
    ``magnitude_dist="gaussian"`` draws y ~ N(0, 1) and ignores the bounds.
    """

    y_min: float = 0.1
    y_max: float = 1.0
    frac_positive: float = 0.5
    magnitude_dist: str = "uniform"
    both_signs: bool = False

    def __post_init__(self):
        if self.magnitude_dist not in ("uniform", "fixed", "gaussian"):
            raise DataError(f"unknown magnitude_dist {self.magnitude_dist!r}")
        if self.magnitude_dist != "gaussian" and not 0 < self.y_min <= self.y_max:
            raise DataError("need 0 < y_min <= y_max")
        if not 0 <= self.frac_positive <= 1:
            raise DataError("frac_positive must lie in [0, 1]")
        if self.both_signs and self.frac_positive in (0.0, 1.0):
            raise DataError("both signs requested but frac_positive forces one sign")

    def draw(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.magnitude_dist == "gaussian":
            y = rng.standard_normal(n)
            while np.any(y == 0) or (self.both_signs and (np.all(y > 0) or np.all(y < 0))):
                y = rng.standard_normal(n)
            return y
        if self.magnitude_dist == "fixed":
            mag = np.full(n, self.y_max)
        else:
            mag = rng.uniform(self.y_min, self.y_max, size=n)
        for _ in range(1000):
            pos = rng.random(n) < self.frac_positive
            if not self.both_signs or 0 < pos.sum() < n:
                break
        else:
            raise DataError("could not draw labels of both signs")
        return np.where(pos, mag, -mag)

    def to_dict(self) -> dict:
        return {
            "y_min": self.y_min,
            "y_max": self.y_max,
            "frac_positive": self.frac_positive,
            "magnitude_dist": self.magnitude_dist,
            "both_signs": self.both_signs,
        }


@dataclass(frozen=True)
class Constants:
    """Named constants used by the freezing conditions and distance bounds."""

    C_g: float = FALLBACK_CG
    C_y: float = 2.0
    C_alpha: float | None = None
    C_0: float | None = None
    C: float = 10.0

    def __post_init__(self):
        if self.C_alpha is None:
            object.__setattr__(self, "C_alpha", 4.0 * max(self.C_g**2, self.C_y * self.C_g))
        if self.C_0 is None:
            object.__setattr__(self, "C_0", 4.0 * self.C_alpha**2)
        problems = self.violations()
        if problems:
            raise DataError("; ".join(problems))

    def violations(self) -> list[str]:
        out = []
        if self.C_g < 1:
            out.append("C_g must be >= 1")
        if self.C_y < 2:
            out.append("C_y must be >= 2")
        if self.C_alpha < max(self.C_g**2, self.C_y * self.C_g):
            out.append("C_alpha must be >= max(C_g^2, C_y*C_g)")
        if self.C_0 < self.C_alpha**2:
            out.append("C_0 must be >= C_alpha^2")
        if self.C <= 0:
            out.append("C must be positive")
        return out

    def replace(self, **kw) -> "Constants":
        base = {"C_g": self.C_g, "C_y": self.C_y, "C": self.C}
        # derived constants follow C_g/C_y unless given explicitly
        base.update(kw)
        return Constants(**base)

    def to_dict(self) -> dict:
        return {"C_g": self.C_g, "C_y": self.C_y, "C_alpha": self.C_alpha, "C_0": self.C_0, "C": self.C}


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    spectrum: Spectrum
    seed: int | None = None
    z_dist: str = "gaussian"
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.X.ndim != 2 or self.y.shape != (self.X.shape[0],):
            raise DataError("X must be n x d and y length n")
        if self.X.shape[1] != self.spectrum.d:
            raise DataError("feature dimension does not match the spectrum")
        if np.any(self.y == 0):
            raise DataError("labels must be nonzero")
        pos = self.y > 0
        if np.any(np.diff(pos.astype(int)) > 0):
            raise DataError("rows with positive labels must precede negative ones")
        self.X.setflags(write=False)
        self.y.setflags(write=False)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def n_pos(self) -> int:
        return int(np.count_nonzero(self.y > 0))

    @property
    def n_neg(self) -> int:
        return self.n - self.n_pos

    @property
    def pos_idx(self) -> np.ndarray:
        return np.arange(self.n_pos)

    @property
    def neg_idx(self) -> np.ndarray:
        return np.arange(self.n_pos, self.n)

    @property
    def X_pos(self) -> np.ndarray:
        return self.X[: self.n_pos]

    @property
    def X_neg(self) -> np.ndarray:
        return self.X[self.n_pos :]

    @property
    def y_pos(self) -> np.ndarray:
        return self.y[: self.n_pos]

    @property
    def y_neg(self) -> np.ndarray:
        return self.y[self.n_pos :]

    @property
    def y_min(self) -> float:
        return float(np.abs(self.y).min())

    @property
    def y_max(self) -> float:
        return float(np.abs(self.y).max())

    @cached_property
    def gram(self) -> np.ndarray:
        K = self.X @ self.X.T
        return 0.5 * (K + K.T)

    @cached_property
    def gram_eigs(self) -> np.ndarray:
        """Eigenvalues of XX^T in ascending order."""
        return linalg.eigvalsh(self.gram)

    @cached_property
    def gram_cho(self):
        """Cholesky factor of XX^T, raising on rank deficiency or bad conditioning."""
        eig = self.gram_eigs
        if eig[0] <= 0 or eig[-1] / eig[0] > 1e12:
            raise DataError(f"XX^T is ill-conditioned (eigenvalues {eig[0]:.3g}..{eig[-1]:.3g})")
        return linalg.cho_factor(self.gram, lower=True)

    def solve_gram(self, b: np.ndarray) -> np.ndarray:
        """Solve (XX^T) a = b; b may hold several right-hand sides as rows."""
        b = np.asarray(b, dtype=float)
        if b.ndim == 1:
            return linalg.cho_solve(self.gram_cho, b)
        return linalg.cho_solve(self.gram_cho, b.T).T

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "d": self.d,
            "seed": self.seed,
            "z_dist": self.z_dist,
            "spectrum": self.spectrum.to_dict(),
            "X": self.X.tolist(),
            "y": self.y.tolist(),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "Dataset":
        try:
            X = np.asarray(obj["X"], dtype=float)
            y = np.asarray(obj["y"], dtype=float)
            if X.shape != (obj["n"], obj["d"]):
                raise DataError("X shape disagrees with n, d")
            return cls(X, y, Spectrum.from_dict(obj["spectrum"]), obj.get("seed"), obj.get("z_dist", "gaussian"))
        except (KeyError, TypeError) as exc:
            raise DataError(f"malformed dataset document: {exc}") from exc


def _draw_z(rng: np.random.Generator, shape, z_dist: str) -> np.ndarray:
    if z_dist == "gaussian":
        return rng.standard_normal(shape)
    if z_dist == "rademacher":
        return rng.choice([-1.0, 1.0], size=shape)
    if z_dist == "uniform_unit_var":
        s = math.sqrt(3.0)
        return rng.uniform(-s, s, size=shape)
    raise DataError(f"unknown z_dist {z_dist!r}")


def haar_rotation(d: int, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def sample_dataset(
    spectrum: Spectrum,
    n: int,
    label_spec: LabelSpec,
    z_dist: str = "gaussian",
    seed: int = 0,
    rotate: bool = False,
) -> Dataset:
    """Draw n examples x = V Lambda^{1/2} z and labels per ``label_spec``.

    Labels and features use separate streams spawned from ``seed``, so the
    labels for a given seed do not depend on d.
    """
    d = spectrum.d
    if not 1 <= n <= d:
        raise DataError(f"need 1 <= n <= d, got n={n}, d={d}")
    if z_dist not in Z_DISTS:
        raise DataError(f"unknown z_dist {z_dist!r}")
    label_ss, feat_ss = np.random.SeedSequence(seed).spawn(2)
    y = label_spec.draw(n, np.random.default_rng(label_ss))
    order = np.argsort(~(y > 0), kind="stable")
    y = y[order]

    rng = np.random.default_rng(feat_ss)
    V = haar_rotation(d, rng) if rotate else None
    root = np.sqrt(spectrum.lam)
    for _ in range(MAX_RESAMPLES + 1):
        X = _draw_z(rng, (n, d), z_dist) * root
        if V is not None:
            X = X @ V.T
        sv = linalg.svdvals(X)
        if sv[-1] > RANK_RTOL * sv[0]:
            return Dataset(X, y, spectrum, seed, z_dist)
    raise DataError("sampled X is rank deficient after resampling")


@dataclass(frozen=True)
class AssumptionReport:
    label_bounds_hold: bool
    label_margin: float
    d2_required: float
    dinf_required: float
    d2_margin: float
    dinf_margin: float
    y_min: float
    y_max: float

    @property
    def high_dim_holds(self) -> bool:
        return self.d2_margin >= 0 and self.dinf_margin >= 0

    def to_dict(self) -> dict:
        out = dict(self.__dict__)
        out["high_dim_holds"] = self.high_dim_holds
        return out


def check_assumptions(dataset: Dataset, constants: Constants, y_min=None, y_max=None) -> AssumptionReport:
    """Evaluate the label-bound and high-dimensionality assumptions.

    The bounds default to the observed min/max label magnitude.
    """
    y_min = dataset.y_min if y_min is None else float(y_min)
    y_max = dataset.y_max if y_max is None else float(y_max)
    a = np.abs(dataset.y)
    label_margin = float(min(a.min() - y_min, y_max - a.max()))
    n, ratio, C0 = dataset.n, y_max / y_min, constants.C_0
    d2_req = C0**2 * n**2 * ratio**2
    dinf_req = C0 * n**1.5 * ratio
    sp = dataset.spectrum
    return AssumptionReport(
        label_bounds_hold=label_margin >= 0,
        label_margin=label_margin,
        d2_required=d2_req,
        dinf_required=dinf_req,
        d2_margin=sp.d2 - d2_req,
        dinf_margin=sp.dinf - dinf_req,
        y_min=y_min,
        y_max=y_max,
    )


def estimate_cg(dataset: Dataset) -> float:
    """Smallest C_g with l1/C_g <= mu_n <= mu_1 <= C_g * l1 on this sample."""
    eig = dataset.gram_eigs
    l1 = dataset.spectrum.l1
    if eig[0] <= 0:
        return FALLBACK_CG
    return float(max(eig[-1] / l1, l1 / eig[0]))


def default_constants(dataset: Dataset | None = None, **overrides) -> Constants:
    cg = overrides.pop("C_g", None)
    if cg is None:
        cg = estimate_cg(dataset) if dataset is not None else FALLBACK_CG
    return Constants(C_g=max(1.0, cg), **overrides)


def save_dataset_json(dataset: Dataset, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(dataset.to_dict(), sort_keys=True))
    return path


def load_dataset_json(path) -> Dataset:
    try:
        obj = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: {exc}") from exc
    return Dataset.from_dict(obj)


def save_dataset_csv(dataset: Dataset, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "label"] + [f"x{j}" for j in range(dataset.d)])
        for i in range(dataset.n):
            w.writerow([i, repr(float(dataset.y[i]))] + [repr(float(v)) for v in dataset.X[i]])
    return path
