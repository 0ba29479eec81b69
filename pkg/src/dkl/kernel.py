"""Reproducing kernels and Gram / cross-kernel matrices.

Point sets are stored column-wise: a ``p x M`` array holds ``M`` points of
dimension ``p``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

GAUSSIAN = "gaussian"
POLYNOMIAL = "polynomial"


@dataclass(frozen=True)
class KernelSpec:
    kind: str = GAUSSIAN
    bandwidth: float = 1.0
    offset: float = 0.0
    degree: int = 1

    def __post_init__(self):
        if self.kind == GAUSSIAN:
            if not self.bandwidth > 0:
                raise ValueError(f"gaussian bandwidth must be positive, got {self.bandwidth}")
        elif self.kind == POLYNOMIAL:
            if self.offset < 0:
                raise ValueError(f"polynomial offset must be nonnegative, got {self.offset}")
            if int(self.degree) != self.degree or self.degree < 1:
                raise ValueError(f"polynomial degree must be a positive integer, got {self.degree}")
        else:
            raise ValueError(f"unknown kernel kind {self.kind!r}")

    @classmethod
    def gaussian(cls, bandwidth: float) -> "KernelSpec":
        return cls(kind=GAUSSIAN, bandwidth=float(bandwidth))

    @classmethod
    def polynomial(cls, degree: int, offset: float = 0.0) -> "KernelSpec":
        return cls(kind=POLYNOMIAL, offset=float(offset), degree=int(degree))

    def to_dict(self) -> dict:
        if self.kind == GAUSSIAN:
            return {"kind": GAUSSIAN, "bandwidth": self.bandwidth}
        return {"kind": POLYNOMIAL, "offset": self.offset, "degree": self.degree}

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        kind = d.get("kind")
        if kind == GAUSSIAN:
            return cls.gaussian(d["bandwidth"])
        if kind == POLYNOMIAL:
            return cls.polynomial(d["degree"], d.get("offset", 0.0))
        raise ValueError(f"unknown kernel kind {kind!r}")

    def feature_bound(self, X: np.ndarray | None = None) -> float:
        """sup_x sqrt(k(x, x)) over the data; exactly 1 for the gaussian kernel."""
        if self.kind == GAUSSIAN:
            return 1.0
        if X is None or np.size(X) == 0:
            raise ValueError("polynomial kernel bound needs data")
        X = np.asarray(X, dtype=float)
        sq = np.sum(X * X, axis=0)
        return float(np.sqrt(np.max((sq + self.offset) ** self.degree)))


def _as_points(X, name="X") -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"{name} must be a p x M matrix, got shape {X.shape}")
    return X


def kernel_eval(spec: KernelSpec, x, x2) -> float:
    x = np.asarray(x, dtype=float).ravel()
    x2 = np.asarray(x2, dtype=float).ravel()
    if x.shape != x2.shape or x.size == 0:
        raise ValueError(f"dimension mismatch: {x.shape} vs {x2.shape}")
    if spec.kind == GAUSSIAN:
        diff = x - x2
        return float(np.exp(-np.dot(diff, diff) / (2.0 * spec.bandwidth ** 2)))
    return float((np.dot(x, x2) + spec.offset) ** spec.degree)


def cross_kernel(spec: KernelSpec, X, X2) -> np.ndarray:
    """Matrix with entry (m, n) = k(X[:, m], X2[:, n])."""
    X = _as_points(X)
    X2 = _as_points(X2, "X2")
    M, N = X.shape[1], X2.shape[1]
    if M == 0 or N == 0:
        return np.zeros((M, N))
    if X.shape[0] != X2.shape[0]:
        raise ValueError(f"dimension mismatch: p={X.shape[0]} vs p={X2.shape[0]}")
    if spec.kind == GAUSSIAN:
        # explicit pairwise differences keep k(a, b) == k(b, a) bit for bit
        sq = np.zeros((M, N))
        for row, row2 in zip(X, X2):
            diff = row[:, None] - row2[None, :]
            sq += diff * diff
        return np.exp(-sq / (2.0 * spec.bandwidth ** 2))
    return (X.T @ X2 + spec.offset) ** spec.degree


def gram_matrix(spec: KernelSpec, X) -> np.ndarray:
    X = _as_points(X)
    K = cross_kernel(spec, X, X)
    # symmetrize away any asymmetry from the matmul path of the polynomial kernel
    return 0.5 * (K + K.T)
