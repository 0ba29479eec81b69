"""Multi-class losses on activation vectors and their derivatives.

Class labels are 1-based (``1..D``) everywhere in the public API.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LOGISTIC = "logistic"
HINGE = "hinge"


@dataclass(frozen=True)
class LossSpec:
    kind: str
    classes: int

    def __post_init__(self):
        if self.kind not in (LOGISTIC, HINGE):
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if int(self.classes) != self.classes or self.classes < 2:
            raise ValueError(f"need at least two classes, got {self.classes}")

    def to_dict(self):
        return {"kind": self.kind, "classes": self.classes}


def _check(spec: LossSpec, a, y) -> tuple[np.ndarray, int]:
    a = np.asarray(a, dtype=float).ravel()
    if a.size != spec.classes:
        raise ValueError(f"expected {spec.classes} activations, got {a.size}")
    y = int(y)
    if not 1 <= y <= spec.classes:
        raise ValueError(f"label {y} outside 1..{spec.classes}")
    return a, y - 1


def _softmax(a: np.ndarray) -> np.ndarray:
    z = np.exp(a - a.max())
    return z / z.sum()


def _runner_up(a: np.ndarray, k: int) -> int:
    """Index of the largest activation other than ``k`` (lowest index on ties)."""
    masked = a.copy()
    masked[k] = -np.inf
    return int(np.argmax(masked))


def loss(spec: LossSpec, activations, y) -> float:
    a, k = _check(spec, activations, y)
    if spec.kind == LOGISTIC:
        m = a.max()
        val = m + np.log(np.sum(np.exp(a - m))) - a[k]
    else:
        r = _runner_up(a, k)
        val = 1.0 + a[r] - a[k]
    return max(float(val), 0.0)


def loss_grad(spec: LossSpec, activations, y) -> np.ndarray:
    """Derivative of the loss with respect to the activation vector (a subgradient for hinge)."""
    a, k = _check(spec, activations, y)
    if spec.kind == LOGISTIC:
        g = _softmax(a)
        g[k] -= 1.0
        return g
    g = np.zeros_like(a)
    r = _runner_up(a, k)
    if 1.0 + a[r] - a[k] > 0:
        g[r] = 1.0
        g[k] = -1.0
    return g


def batch_loss(spec: LossSpec, A: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Per-row losses for an ``N x D`` activation matrix and 1-based labels."""
    A = np.asarray(A, dtype=float)
    k = np.asarray(y, dtype=int) - 1
    rows = np.arange(A.shape[0])
    if spec.kind == LOGISTIC:
        m = A.max(axis=1)
        val = m + np.log(np.sum(np.exp(A - m[:, None]), axis=1)) - A[rows, k]
    else:
        masked = A.copy()
        masked[rows, k] = -np.inf
        val = 1.0 + masked.max(axis=1) - A[rows, k]
    return np.maximum(val, 0.0)


def predict(activations) -> int:
    return int(np.argmax(np.asarray(activations, dtype=float))) + 1


def predict_many(A: np.ndarray) -> np.ndarray:
    return np.argmax(np.asarray(A, dtype=float), axis=1) + 1
