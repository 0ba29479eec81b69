"""Round-by-round driver for the network: snapshot, exchange, local updates, metrics."""
from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .datagen import AgentStream, Dataset
from .gppm import AgentState, RoundInfo, StepParams, agent_round
from .kernel import KernelSpec
from .losses import LossSpec, batch_loss, predict_many
from .network import CommStats, Graph, exchange_round, random_connected_graph
from .rkhs import FunctionExpansion, evaluate_many, hilbert_dist_sq, hilbert_norm_sq

log = logging.getLogger(__name__)

DIVERGENCE_NORM = 1e6
BUDGET_SLACK = 1e-10


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class DivergenceError(RuntimeError):
    def __init__(self, round_, detail):
        self.round = round_
        super().__init__(f"diverged at round {round_}: {detail}")


@dataclass
class ExperimentConfig:
    num_agents: int = 20
    edge_prob: float = 0.2
    kernel: KernelSpec = field(default_factory=lambda: KernelSpec.gaussian(0.6))
    loss: LossSpec = field(default_factory=lambda: LossSpec("logistic", 5))
    step: str = "constant"  # or "diminishing": eta_t = eta / (1 + t)
    eta: float = 3.0
    lam: float = 1e-6
    parsimony_K: float = 0.04
    batch_size: int = 32
    penalty: str = "doubling"  # or "fixed"
    c0: float = 0.01
    c_interval: int = 200
    c_max: float | None = None  # optional cap on the doubling schedule
    rounds: int | None = None  # None: one pass over the training set
    eval_every: int = 10
    ball_radius: float | None = None
    seed: int = 0
    graph_seed: int | None = None
    debug_checks: bool = False

    def problems(self) -> list[str]:
        out = []
        if self.num_agents < 1:
            out.append("num_agents must be >= 1")
        if not 0 < self.edge_prob <= 1:
            out.append("edge_prob must lie in (0, 1]")
        if self.step not in ("constant", "diminishing"):
            out.append(f"unknown step schedule {self.step!r}")
        if not self.eta > 0:
            out.append("eta must be positive")
        if self.lam < 0:
            out.append("lambda must be nonnegative")
        if self.eta * self.lam >= 1:
            out.append(f"eta * lambda = {self.eta * self.lam:g} must be < 1")
        if self.step == "constant" and not self.parsimony_K >= 0:
            out.append("parsimony_K must be nonnegative")
        if self.batch_size < 1:
            out.append("batch_size must be >= 1")
        if self.penalty not in ("fixed", "doubling"):
            out.append(f"unknown penalty schedule {self.penalty!r}")
        if self.c0 < 0:
            out.append("c0 must be nonnegative")
        if self.penalty == "doubling" and self.c_interval < 1:
            out.append("c_interval must be >= 1")
        if self.c_max is not None and not self.c_max >= 0:
            out.append("c_max must be nonnegative")
        if self.rounds is not None and self.rounds < 0:
            out.append("rounds must be >= 0")
        if self.eval_every < 1:
            out.append("eval_every must be >= 1")
        if self.ball_radius is not None and not self.ball_radius > 0:
            out.append("ball_radius must be positive")
        return out

    def validate(self) -> None:
        probs = self.problems()
        if probs:
            raise ConfigError(probs)

    def eta_at(self, t: int) -> float:
        return self.eta if self.step == "constant" else self.eta / (1.0 + t)

    def epsilon_at(self, t: int) -> float:
        if self.step == "constant":
            return self.parsimony_K * self.eta ** 1.5
        return self.eta_at(t) ** 2

    def c_at(self, samples_per_agent: int) -> float:
        if self.penalty == "fixed":
            c = self.c0
        else:
            c = self.c0 * 2.0 ** (samples_per_agent // self.c_interval)
        return c if self.c_max is None else min(c, self.c_max)

    def resolved_graph_seed(self) -> int:
        return self.seed if self.graph_seed is None else self.graph_seed

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kernel"] = self.kernel.to_dict()
        d["loss"] = self.loss.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError([f"unknown config keys: {sorted(unknown)}"])
        try:
            if "kernel" in d:
                d["kernel"] = KernelSpec.from_dict(d["kernel"])
            if "loss" in d:
                d["loss"] = LossSpec(d["loss"]["kind"], int(d["loss"]["classes"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError([f"invalid kernel/loss block: {exc}"]) from None
        return cls(**d)


METRIC_FIELDS = ["round", "samples", "objective", "penalty", "disagreement",
                 "constraint_violation", "c", "comm_scalars",
                 "order_min", "order_median", "order_max", "acc_min", "acc_median", "acc_max"]


@dataclass
class MetricsRow:
    round: int
    samples: int
    objective: float
    penalty: float
    disagreement: float
    constraint_violation: float
    c: float
    comm_scalars: int
    model_orders: list
    accuracies: list

    def csv_row(self) -> list:
        orders = np.asarray(self.model_orders)
        acc = np.asarray(self.accuracies)
        head = [self.round, self.samples, self.objective, self.penalty, self.disagreement,
                self.constraint_violation, self.c, self.comm_scalars,
                int(orders.min()), float(np.median(orders)), int(orders.max()),
                float(acc.min()), float(np.median(acc)), float(acc.max())]
        return [repr(v) if isinstance(v, float) else v for v in head] + \
            [int(m) for m in orders] + [repr(float(a)) for a in acc]


def metrics_header(V: int) -> list[str]:
    return METRIC_FIELDS + [f"order_{i + 1}" for i in range(V)] + [f"acc_{i + 1}" for i in range(V)]


def write_metrics_csv(rows: list[MetricsRow], V: int, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(metrics_header(V))
        for r in rows:
            w.writerow(r.csv_row())


def eval_objective(models: list[FunctionExpansion], test: Dataset, loss: LossSpec) -> float:
    """Sum over agents of the mean held-out loss (no regularizer)."""
    if len(test) == 0:
        raise ValueError("empty test set")
    X = test.features.T
    return float(sum(np.mean(batch_loss(loss, evaluate_many(f, X), test.labels)) for f in models))


def eval_disagreement(models: list[FunctionExpansion], graph: Graph) -> float:
    """Sum of squared Hilbert distances over the edges, each edge once."""
    return float(sum(hilbert_dist_sq(models[i], models[j]) for i, j in graph.sorted_edges()))


def eval_constraint_violation(models: list[FunctionExpansion], test: Dataset, graph: Graph, _acts=None) -> float:
    """Half the sum over ordered neighbor pairs of the mean squared activation gap."""
    if len(test) == 0:
        raise ValueError("empty test set")
    acts = _acts if _acts is not None else [evaluate_many(f, test.features.T) for f in models]
    # every unordered edge appears twice in the ordered sum, cancelling the 1/2
    return float(sum(np.mean(np.sum((acts[i] - acts[j]) ** 2, axis=1)) for i, j in graph.sorted_edges()))


def convergence_radius(eta: float, lam: float, K: float, V: int, sigma: float) -> float:
    """Asymptotic neighbourhood radius for constant steps: (sqrt(eta)/lam) (KV + sqrt(K^2 V^2 + lam sigma^2))."""
    if not (eta > 0 and lam > 0 and K >= 0 and V >= 1 and sigma >= 0):
        raise ValueError("need eta, lambda > 0 and K, sigma >= 0, V >= 1")
    if eta * lam >= 1:
        raise ValueError("eta * lambda must be below 1")
    kv = K * V
    return math.sqrt(eta) / lam * (kv + math.sqrt(kv * kv + lam * sigma * sigma))


def evaluate_metrics(models, graph: Graph, test: Dataset, cfg: ExperimentConfig,
                     round_: int, samples: int, c: float, comm: int) -> MetricsRow:
    X = test.features.T
    acts = [evaluate_many(f, X) for f in models]
    objective = float(sum(np.mean(batch_loss(cfg.loss, a, test.labels)) for a in acts))
    violation = eval_constraint_violation(models, test, graph, _acts=acts)
    reg = 0.5 * cfg.lam * sum(hilbert_norm_sq(f) for f in models)
    return MetricsRow(
        round=round_, samples=samples, objective=objective,
        penalty=objective + reg + c * violation,
        disagreement=eval_disagreement(models, graph),
        constraint_violation=violation, c=c, comm_scalars=comm,
        model_orders=[f.order for f in models],
        accuracies=[float(np.mean(predict_many(a) == test.labels)) for a in acts],
    )


@dataclass
class ExperimentResult:
    metrics: list
    models: list
    graph: Graph
    komp_calls: int = 0
    budget_violations: int = 0
    max_budget_excess: float = -math.inf
    comm: CommStats = field(default_factory=CommStats)


def _check_finite(models, round_):
    for i, f in enumerate(models):
        if not np.all(np.isfinite(f.weights)):
            raise DivergenceError(round_, f"agent {i + 1} has non-finite weights")
        norm = math.sqrt(hilbert_norm_sq(f))
        if norm > DIVERGENCE_NORM:
            raise DivergenceError(round_, f"agent {i + 1} has Hilbert norm {norm:.3e}")


def run_experiment(cfg: ExperimentConfig, train: Dataset, test: Dataset,
                   graph: Graph | None = None, threads: int = 1, on_round=None) -> ExperimentResult:
    """Run the network for ``cfg.rounds`` synchronous rounds.

    Results do not depend on ``threads``: agents only read the pre-round
    snapshot and outputs are collected in agent order.
    """
    cfg.validate()
    train.validate_classes(cfg.loss.classes)
    test.validate_classes(cfg.loss.classes)
    if len(train) and train.dim != test.dim:
        raise ValueError("train and test feature dimensions differ")
    V, B, D = cfg.num_agents, cfg.batch_size, cfg.loss.classes
    if graph is None:
        graph = random_connected_graph(V, cfg.edge_prob, cfg.resolved_graph_seed())
    elif graph.num_agents != V:
        raise ValueError(f"graph has {graph.num_agents} agents, config expects {V}")
    rounds = cfg.rounds if cfg.rounds is not None else math.ceil(len(train) / B)
    if rounds and len(train) == 0:
        raise ValueError("empty training set")

    zero = FunctionExpansion.zero(cfg.kernel, test.dim, D)
    agents = [AgentState(i, zero, graph.neighbors(i)) for i in range(V)]
    streams = [AgentStream(train, cfg.seed, i) for i in range(V)] if rounds else []
    result = ExperimentResult([], [], graph)
    pool = ThreadPoolExecutor(threads) if threads > 1 else None

    def record(t):
        c_now = cfg.c_at(t * B)
        row = evaluate_metrics([a.f for a in agents], graph, test, cfg, t, t * B, c_now,
                               result.comm.scalars_returned)
        result.metrics.append(row)
        log.info("round %d: objective %.4f disagreement %.4g median acc %.4f max order %d",
                 t, row.objective, row.disagreement, float(np.median(row.accuracies)), max(row.model_orders))
        if on_round is not None:
            on_round(row)

    try:
        record(0)
        for t in range(rounds):
            params = StepParams(cfg.eta_at(t), cfg.lam, cfg.c_at(t * B), cfg.epsilon_at(t))
            batches = [s.next_batch(B) for s in streams]
            snapshot = [a.f for a in agents]
            evals, stats = exchange_round(graph, snapshot, [X for X, _ in batches])
            result.comm.add(stats)
            infos = [[] for _ in range(V)]

            def step(i):
                return agent_round(agents[i], batches[i], evals[i], params, cfg.loss,
                                   cfg.ball_radius, infos[i] if cfg.debug_checks else None)

            agents = list(pool.map(step, range(V))) if pool else [step(i) for i in range(V)]
            result.komp_calls += V
            if cfg.debug_checks:
                for i, (info,) in enumerate(infos):
                    excess = info.projection_error - params.epsilon
                    result.max_budget_excess = max(result.max_budget_excess, excess)
                    if cfg.ball_radius is None and excess > BUDGET_SLACK:
                        result.budget_violations += 1
                        log.error("round %d agent %d: projection error %.6g exceeds budget %.6g",
                                  t + 1, i + 1, info.projection_error, params.epsilon)
            _check_finite([a.f for a in agents], t + 1)
            if (t + 1) % cfg.eval_every == 0 or t + 1 == rounds:
                record(t + 1)
    finally:
        if pool:
            pool.shutdown()
    result.models = [a.f for a in agents]
    return result


__all__ = [
    "ConfigError", "DivergenceError", "ExperimentConfig", "ExperimentResult", "MetricsRow",
    "RoundInfo", "convergence_radius", "eval_constraint_violation", "eval_disagreement",
    "eval_objective", "evaluate_metrics", "metrics_header", "run_experiment", "write_metrics_csv",
]
