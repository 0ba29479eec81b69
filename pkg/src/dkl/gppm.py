"""Per-agent update: penalized functional SGD step followed by KOMP projection."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .komp import KompBudget, komp
from .losses import LossSpec, loss_grad
from .network import NeighborEvals
from .rkhs import FunctionExpansion, append_atoms, evaluate_many, hilbert_dist_sq, hilbert_norm_sq


@dataclass(frozen=True)
class StepParams:
    eta: float
    lam: float = 0.0
    c: float = 0.0
    epsilon: float = 0.0

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError(f"step size must be positive, got {self.eta}")
        if self.lam < 0 or self.c < 0 or self.epsilon < 0:
            raise ValueError("lambda, c and epsilon must be nonnegative")
        if self.eta * self.lam >= 1:
            raise ValueError(f"eta * lambda = {self.eta * self.lam} must be below 1")


@dataclass(frozen=True)
class AgentState:
    id: int
    f: FunctionExpansion
    neighbors: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "neighbors", tuple(int(j) for j in self.neighbors))
        if self.id in self.neighbors:
            raise ValueError(f"agent {self.id} lists itself as a neighbor")


def _batch_arrays(f: FunctionExpansion, batch):
    """Accept either ``(X, y)`` with X ``p x B`` or a list of ``(x, y)`` pairs."""
    if isinstance(batch, tuple) and len(batch) == 2 and np.ndim(batch[0]) == 2:
        X, y = batch
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=int)
    else:
        pairs = list(batch)
        if not pairs:
            raise ValueError("batch is empty")
        X = np.column_stack([np.asarray(x, dtype=float).ravel() for x, _ in pairs])
        y = np.array([int(lbl) for _, lbl in pairs])
    if X.shape[1] == 0:
        raise ValueError("batch is empty")
    if X.shape[0] != f.dim or y.shape != (X.shape[1],):
        raise ValueError(f"batch shapes {X.shape}, {y.shape} do not match dimension {f.dim}")
    return X, y


def local_gradient_step(agent: AgentState, batch, nbr: NeighborEvals, params: StepParams, loss: LossSpec) -> FunctionExpansion:
    """Unprojected minibatch step; appends every batch point as a new atom.

    New weight row for sample b is
    ``-(eta/B) * (loss'(f_i(x_b), y_b) + c * sum_j (f_i(x_b) - f_j(x_b)))``
    and the old weights are shrunk by ``1 - eta * lambda``.
    """
    f = agent.f
    X, y = _batch_arrays(f, batch)
    B, D = X.shape[1], f.classes
    if loss.classes != D:
        raise ValueError(f"loss has {loss.classes} classes, expansion has {D}")
    if tuple(nbr.neighbors) != agent.neighbors:
        raise ValueError(f"neighbor evaluations cover {nbr.neighbors}, agent has {agent.neighbors}")
    if nbr.values.shape != (len(agent.neighbors), B, D):
        raise ValueError(f"neighbor evaluations have shape {nbr.values.shape}, expected {(len(agent.neighbors), B, D)}")
    own = evaluate_many(f, X)
    grad = np.stack([loss_grad(loss, own[b], y[b]) for b in range(B)])
    if agent.neighbors and params.c:
        grad = grad + params.c * (len(agent.neighbors) * own - nbr.values.sum(axis=0))
    new_w = -(params.eta / B) * grad
    return append_atoms(f, X, new_w, 1.0 - params.eta * params.lam)


def project(f_tilde: FunctionExpansion, epsilon: float, trace: list | None = None) -> FunctionExpansion:
    return komp(f_tilde, KompBudget(epsilon), trace=trace)


def clip_to_ball(f: FunctionExpansion, radius: float | None) -> FunctionExpansion:
    """Rescale onto the Hilbert ball of the given radius (no-op when ``radius`` is None)."""
    if radius is None:
        return f
    norm = np.sqrt(hilbert_norm_sq(f))
    if norm <= radius:
        return f
    return FunctionExpansion(f.kernel, f.dictionary, f.weights * (radius / norm))


@dataclass
class RoundInfo:
    order_before: int
    order_tilde: int
    order_after: int
    projection_error: float


def agent_round(agent: AgentState, batch, nbr: NeighborEvals, params: StepParams, loss: LossSpec,
                ball_radius: float | None = None, info: list | None = None) -> AgentState:
    """One synchronous round for one agent; ``info``, if given, receives a :class:`RoundInfo`."""
    f_tilde = local_gradient_step(agent, batch, nbr, params, loss)
    f_new = clip_to_ball(project(f_tilde, params.epsilon), ball_radius)
    if info is not None:
        info.append(RoundInfo(agent.f.order, f_tilde.order, f_new.order,
                              float(np.sqrt(hilbert_dist_sq(f_new, f_tilde)))))
    return AgentState(agent.id, f_new, agent.neighbors)
