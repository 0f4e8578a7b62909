"""Shallow ReLU regression model h(x) = sum_k s_k relu(w_k . x) with fixed signs."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .spectral_data import DataError, Dataset


@dataclass(frozen=True)
class ModelState:
    weights: np.ndarray  # m x d
    signs: np.ndarray  # m entries in {-1, +1}
    iter: int = 0

    def __post_init__(self):
        W = np.array(self.weights, dtype=float, ndmin=2)
        s = np.array(self.signs, dtype=float).ravel()
        if W.shape[0] != s.size:
            raise DataError("one sign per neuron required")
        if not np.all(np.abs(s) == 1):
            raise DataError("signs must be +1 or -1")
        W.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "weights", W)
        object.__setattr__(self, "signs", s)

    @property
    def m(self) -> int:
        return self.weights.shape[0]

    @property
    def d(self) -> int:
        return self.weights.shape[1]

    def with_weights(self, W: np.ndarray, iter: int | None = None) -> "ModelState":
        return ModelState(W, self.signs, self.iter if iter is None else iter)

    def to_dict(self) -> dict:
        return {"signs": [int(v) for v in self.signs], "weights": self.weights.tolist(), "iter": self.iter}

    @classmethod
    def from_dict(cls, obj: dict) -> "ModelState":
        return cls(np.asarray(obj["weights"], dtype=float), np.asarray(obj["signs"]), int(obj.get("iter", 0)))

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), sort_keys=True))
        return path

    @classmethod
    def load(cls, path) -> "ModelState":
        return cls.from_dict(json.loads(Path(path).read_text()))


def relu(z):
    return np.maximum(z, 0.0)


def _check_dims(model: ModelState, X: np.ndarray):
    if X.ndim != 2 or X.shape[1] != model.d:
        raise DataError(f"X has {X.shape[-1]} columns, model expects {model.d}")


def preactivations(model: ModelState, X: np.ndarray) -> np.ndarray:
    """beta_k = X w_k for every neuron, shape m x n."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    _check_dims(model, X)
    return model.weights @ X.T


def output_from_beta(beta: np.ndarray, signs: np.ndarray) -> np.ndarray:
    return signs @ relu(beta)


def predict(model: ModelState, X: np.ndarray) -> np.ndarray:
    return output_from_beta(preactivations(model, X), model.signs)


def empirical_risk(model: ModelState, dataset: Dataset) -> float:
    r = predict(model, dataset.X) - dataset.y
    return 0.5 * float(r @ r)


def activation_mask(model: ModelState, dataset: Dataset) -> np.ndarray:
    """Boolean m x n matrix, True where w_k . x_i > 0 (strictly)."""
    return preactivations(model, dataset.X) > 0


def gradient(model: ModelState, dataset: Dataset) -> np.ndarray:
    """Rows are s_k X^T D(X w_k) (h(X) - y); the indicator is 0 at exactly zero."""
    beta = preactivations(model, dataset.X)
    r = output_from_beta(beta, model.signs) - dataset.y
    return (model.signs[:, None] * (beta > 0) * r[None, :]) @ dataset.X
