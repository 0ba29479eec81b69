"""Destructive kernel orthogonal matching pursuit with pre-fitting.

Atoms are removed greedily from the dictionary of a target expansion. After each
removal the remaining weights are re-fit by least squares against the original
target (not against the previous approximation), and pruning stops as soon as
the cheapest removal would leave a Hilbert-norm residual larger than the budget.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .kernel import cross_kernel, gram_matrix
from .rkhs import FunctionExpansion

DEFAULT_JITTER = 1e-10
# residual norms below this many ulps of the quadratic form's magnitude are round-off
_NOISE_ULPS = 64.0


class NumericalError(ArithmeticError):
    pass


@dataclass(frozen=True)
class KompBudget:
    epsilon: float
    jitter: float = DEFAULT_JITTER

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ValueError(f"epsilon must be nonnegative, got {self.epsilon}")
        if not self.jitter >= 0:
            raise ValueError(f"jitter must be nonnegative, got {self.jitter}")


def _residual_sq(K: np.ndarray, C: np.ndarray) -> np.ndarray:
    """Squared product-space norms of coefficient stacks ``C`` (..., M, D) under Gram ``K``.

    Values within round-off of zero are flushed to exactly zero.
    """
    KC = np.matmul(K, C)
    val = np.sum(C * KC, axis=(-2, -1))
    absC = np.abs(C)
    scale = np.sum(absC * np.matmul(np.abs(K), absC), axis=(-2, -1))
    floor = _NOISE_ULPS * np.finfo(float).eps * scale
    out = np.where(val <= floor, 0.0, val)
    return out


def _cho(G: np.ndarray):
    try:
        return linalg.cho_factor(G, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        cond = np.linalg.cond(G)
        raise NumericalError(f"reduced Gram matrix not positive definite (condition number {cond:.3e})") from exc


def _solve_subset(K: np.ndarray, Wt: np.ndarray, keep, jitter: float) -> np.ndarray:
    """Least-squares weights on atoms ``keep`` approximating the expansion (K, Wt)."""
    keep = np.asarray(keep, dtype=int)
    if keep.size == 0:
        return np.zeros((0, Wt.shape[1]))
    G = K[np.ix_(keep, keep)]
    G = G + jitter * np.mean(np.diag(G)) * np.eye(keep.size)
    rhs = K[keep, :] @ Wt
    return linalg.cho_solve(_cho(G), rhs, check_finite=False)


def _embed(M: int, keep, W: np.ndarray) -> np.ndarray:
    full = np.zeros((M, W.shape[1]))
    full[np.asarray(keep, dtype=int)] = W
    return full


def prune_error(f_tilde: FunctionExpansion, j: int, jitter: float = DEFAULT_JITTER) -> float:
    """Best achievable residual norm of ``f_tilde`` once atom ``j`` is dropped."""
    M = f_tilde.order
    if not 0 <= j < M:
        raise IndexError(f"atom index {j} out of range for model order {M}")
    K = gram_matrix(f_tilde.kernel, f_tilde.dictionary)
    keep = [k for k in range(M) if k != j]
    W = _solve_subset(K, f_tilde.weights, keep, jitter)
    C = f_tilde.weights - _embed(M, keep, W)
    return float(np.sqrt(_residual_sq(K, C)))


def refit(target: FunctionExpansion, kept_dictionary, jitter: float = DEFAULT_JITTER) -> np.ndarray:
    """Weights on ``kept_dictionary`` giving the Hilbert-norm projection of ``target``.

    Solves ``(K_kk + jitter * mean(diag K_kk) I) W = K_kt W_target``.
    """
    kept = np.asarray(kept_dictionary, dtype=float)
    if kept.ndim != 2:
        raise ValueError("kept_dictionary must be a p x M' matrix")
    if kept.shape[1] == 0:
        return np.zeros((0, target.classes))
    if target.order and kept.shape[0] != target.dim:
        raise ValueError(f"kept atoms have dimension {kept.shape[0]}, target expects {target.dim}")
    G = gram_matrix(target.kernel, kept)
    G = G + jitter * np.mean(np.diag(G)) * np.eye(G.shape[0])
    if target.order == 0:
        return np.zeros((kept.shape[1], target.classes))
    rhs = cross_kernel(target.kernel, kept, target.dictionary) @ target.weights
    return linalg.cho_solve(_cho(G), rhs, check_finite=False)


def removal_errors(K: np.ndarray, Wt: np.ndarray, keep, jitter: float = DEFAULT_JITTER) -> np.ndarray:
    """gamma_j for every position of ``keep``, all from one factorization.

    With ``G`` the jittered Gram of the kept atoms and ``W = G^-1 K[keep] Wt``, the
    optimal weights without atom j are ``W - G^-1[:, j] W[j] / G^-1[j, j]`` (block
    inverse identity), so no per-j solve is needed.
    """
    keep = np.asarray(keep, dtype=int)
    M, m = K.shape[0], keep.size
    G = K[np.ix_(keep, keep)]
    G = G + jitter * np.mean(np.diag(G)) * np.eye(m)
    cho = _cho(G)
    W = linalg.cho_solve(cho, K[keep, :] @ Wt, check_finite=False)
    Ginv = linalg.cho_solve(cho, np.eye(m), check_finite=False)
    U = Ginv / np.diag(Ginv)[None, :]
    # C[j] = Wt - embed(W - U[:, j] W[j])
    base = Wt - _embed(M, keep, W)
    C = np.broadcast_to(base, (m, M, Wt.shape[1])).copy()
    C[:, keep, :] += U.T[:, :, None] * W[:, None, :]
    C[np.arange(m), keep, :] = Wt[keep]
    return np.sqrt(_residual_sq(K, C))


def komp(f_tilde: FunctionExpansion, budget: KompBudget | float, trace: list | None = None) -> FunctionExpansion:
    """Compress ``f_tilde`` to a sub-dictionary within Hilbert distance ``budget.epsilon``.

    If ``trace`` is a list, one ``(kept_indices, gammas)`` pair is appended per sweep.
    """
    if not isinstance(budget, KompBudget):
        budget = KompBudget(float(budget))
    M = f_tilde.order
    if M == 0:
        return f_tilde
    eps, jitter = budget.epsilon, budget.jitter
    K = gram_matrix(f_tilde.kernel, f_tilde.dictionary)
    Wt = f_tilde.weights
    keep = list(range(M))
    W = Wt
    while keep:
        gammas = removal_errors(K, Wt, keep, jitter)
        if trace is not None:
            trace.append((list(keep), gammas.copy()))
        pos = int(np.argmin(gammas))
        if gammas[pos] > eps:
            break
        candidate = keep[:pos] + keep[pos + 1:]
        W_new = _solve_subset(K, Wt, candidate, jitter)
        # guard the return contract against round-off in the fast gamma formula
        if np.sqrt(_residual_sq(K, Wt - _embed(M, candidate, W_new))) > eps:
            break
        keep, W = candidate, W_new
    if len(keep) == M:
        return f_tilde
    return FunctionExpansion(f_tilde.kernel, f_tilde.dictionary[:, keep], W)
