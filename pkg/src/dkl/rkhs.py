"""Kernel expansions f(x) = sum_m W[m, :] k(d_m, x) and their Hilbert-space algebra."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .kernel import KernelSpec, cross_kernel, gram_matrix

NEG_TOL = 1e-8


class ConsistencyError(ArithmeticError):
    """A quantity that is nonnegative analytically came out clearly negative."""


def _clamp_sq(value: float, scale: float = 1.0) -> float:
    if value >= 0:
        return float(value)
    if value >= -NEG_TOL * max(1.0, scale):
        return 0.0
    raise ConsistencyError(f"squared Hilbert norm {value:.3e} is negative beyond tolerance")


@dataclass(frozen=True, eq=False)
class FunctionExpansion:
    """Multi-class kernel expansion sharing one dictionary across the D class functions.

    ``dictionary`` is ``p x M`` (one atom per column), ``weights`` is ``M x D``.
    """

    kernel: KernelSpec
    dictionary: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        D = np.array(self.dictionary, dtype=float, copy=True)
        W = np.array(self.weights, dtype=float, copy=True)
        if D.ndim != 2 or W.ndim != 2:
            raise ValueError("dictionary must be p x M and weights M x D")
        if D.shape[1] != W.shape[0]:
            raise ValueError(f"dictionary has {D.shape[1]} atoms but weights have {W.shape[0]} rows")
        if W.shape[1] < 1:
            raise ValueError("at least one class function is required")
        if not (np.all(np.isfinite(D)) and np.all(np.isfinite(W))):
            raise ValueError("non-finite dictionary or weight entries")
        D.flags.writeable = False
        W.flags.writeable = False
        object.__setattr__(self, "dictionary", D)
        object.__setattr__(self, "weights", W)

    @classmethod
    def zero(cls, kernel: KernelSpec, dim: int, classes: int) -> "FunctionExpansion":
        return cls(kernel, np.zeros((dim, 0)), np.zeros((0, classes)))

    @property
    def dim(self) -> int:
        return self.dictionary.shape[0]

    @property
    def order(self) -> int:
        return self.dictionary.shape[1]

    @property
    def classes(self) -> int:
        return self.weights.shape[1]

    def __call__(self, x) -> np.ndarray:
        return evaluate(self, x)

    def to_dict(self) -> dict:
        return {
            "kernel": self.kernel.to_dict(),
            "p": self.dim,
            "M": self.order,
            "D": self.classes,
            "dictionary": self.dictionary.tolist(),
            "weights": self.weights.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "FunctionExpansion":
        p, M, D = int(doc["p"]), int(doc["M"]), int(doc["D"])
        dictionary = np.array(doc["dictionary"], dtype=float).reshape(p, M)
        weights = np.array(doc["weights"], dtype=float).reshape(M, D)
        return cls(KernelSpec.from_dict(doc["kernel"]), dictionary, weights)

    def save(self, path) -> None:
        # json writes floats with repr, which round-trips doubles exactly
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "FunctionExpansion":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def evaluate(f: FunctionExpansion, x) -> np.ndarray:
    """Class activations at a single point ``x`` (length-D vector)."""
    x = np.asarray(x, dtype=float).ravel()
    if x.size != f.dim:
        raise ValueError(f"point has dimension {x.size}, expansion expects {f.dim}")
    return evaluate_many(f, x[:, None])[0]


def evaluate_many(f: FunctionExpansion, X) -> np.ndarray:
    """Activations at the columns of the ``p x N`` matrix ``X``; returns ``N x D``."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != f.dim:
        raise ValueError(f"points must be {f.dim} x N, got {X.shape}")
    if f.order == 0:
        return np.zeros((X.shape[1], f.classes))
    return cross_kernel(f.kernel, X, f.dictionary) @ f.weights


def hilbert_norm_sq(f: FunctionExpansion) -> float:
    if f.order == 0:
        return 0.0
    K = gram_matrix(f.kernel, f.dictionary)
    val = float(np.sum(f.weights * (K @ f.weights)))
    return _clamp_sq(val, float(np.sum(np.abs(f.weights) * (np.abs(K) @ np.abs(f.weights)))))


def _check_compatible(f: FunctionExpansion, g: FunctionExpansion) -> None:
    if f.kernel != g.kernel:
        raise ValueError(f"kernel mismatch: {f.kernel} vs {g.kernel}")
    if f.classes != g.classes:
        raise ValueError(f"class count mismatch: {f.classes} vs {g.classes}")
    if f.order and g.order and f.dim != g.dim:
        raise ValueError(f"dimension mismatch: {f.dim} vs {g.dim}")


def hilbert_dist_sq(f: FunctionExpansion, g: FunctionExpansion) -> float:
    _check_compatible(f, g)
    if f.order == 0:
        return hilbert_norm_sq(g)
    if g.order == 0:
        return hilbert_norm_sq(f)
    # merge coinciding atoms first so that shared parts cancel exactly
    atoms, inverse = np.unique(np.hstack([f.dictionary, g.dictionary]).T, axis=0, return_inverse=True)
    coef = np.zeros((atoms.shape[0], f.classes))
    np.add.at(coef, inverse.ravel(), np.vstack([f.weights, -g.weights]))
    return hilbert_norm_sq(FunctionExpansion(f.kernel, atoms.T, coef))


def append_atoms(f: FunctionExpansion, points, new_weights, scale_existing: float = 1.0) -> FunctionExpansion:
    """Scale the old weights and append new atoms (columns of ``points``) with ``new_weights`` rows."""
    points = np.asarray(points, dtype=float)
    new_weights = np.asarray(new_weights, dtype=float)
    if points.ndim != 2 or new_weights.ndim != 2:
        raise ValueError("points must be p x B and new_weights B x D")
    if points.shape[1] != new_weights.shape[0]:
        raise ValueError(f"{points.shape[1]} points but {new_weights.shape[0]} weight rows")
    if points.shape[1] and points.shape[0] != f.dim:
        raise ValueError(f"points have dimension {points.shape[0]}, expansion expects {f.dim}")
    if new_weights.shape[0] and new_weights.shape[1] != f.classes:
        raise ValueError(f"weight rows have {new_weights.shape[1]} classes, expected {f.classes}")
    dictionary = np.hstack([f.dictionary, points.reshape(f.dim, -1)])
    weights = np.vstack([scale_existing * f.weights, new_weights.reshape(-1, f.classes)])
    return FunctionExpansion(f.kernel, dictionary, weights)
