"""Communication graphs and the synchronous neighbor-evaluation exchange.

Agents are indexed ``0..V-1`` in Python; the edge-list file format is 1-based.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .rkhs import FunctionExpansion, evaluate_many

MAX_ATTEMPTS = 10_000


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class Graph:
    num_agents: int
    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        V = int(self.num_agents)
        if V < 1:
            raise GraphError("a graph needs at least one agent")
        norm = set()
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise GraphError(f"self-loop at agent {i}")
            if not (0 <= i < V and 0 <= j < V):
                raise GraphError(f"edge ({i}, {j}) outside 0..{V - 1}")
            norm.add((min(i, j), max(i, j)))
        object.__setattr__(self, "edges", frozenset(norm))
        if not _is_connected(V, norm):
            raise GraphError("graph is not connected")
        adj = [[] for _ in range(V)]
        for i, j in norm:
            adj[i].append(j)
            adj[j].append(i)
        object.__setattr__(self, "_adj", tuple(tuple(sorted(a)) for a in adj))

    def neighbors(self, i: int) -> list[int]:
        if not 0 <= i < self.num_agents:
            raise IndexError(f"agent {i} out of range 0..{self.num_agents - 1}")
        return list(self._adj[i])

    def sorted_edges(self) -> list[tuple[int, int]]:
        return sorted(self.edges)

    def to_text(self) -> str:
        lines = [str(self.num_agents)]
        lines += [f"{i + 1} {j + 1}" for i, j in self.sorted_edges()]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Graph":
        rows = [ln.split() for ln in text.splitlines() if ln.strip()]
        if not rows:
            raise GraphError("empty edge-list")
        try:
            V = int(rows[0][0])
            edges = [(int(a) - 1, int(b) - 1) for a, b in rows[1:]]
        except ValueError as exc:
            raise GraphError(f"malformed edge-list: {exc}") from exc
        return cls(V, frozenset(edges))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_text())

    @classmethod
    def load(cls, path) -> "Graph":
        with open(path) as fh:
            return cls.from_text(fh.read())


def _is_connected(V: int, edges) -> bool:
    if V == 1:
        return True
    if not edges:
        return False
    i, j = np.array(sorted(edges)).T
    A = coo_matrix((np.ones(len(i)), (i, j)), shape=(V, V))
    n, _ = connected_components(A, directed=False)
    return n == 1


def neighbors(g: Graph, i: int) -> list[int]:
    return g.neighbors(i)


def random_connected_graph(V: int, p_edge: float, rng_seed: int) -> Graph:
    """Erdos-Renyi graph resampled in full until it is connected."""
    if V < 1:
        raise GraphError("V must be at least 1")
    if not 0 < p_edge <= 1:
        raise GraphError(f"edge probability must lie in (0, 1], got {p_edge}")
    rng = np.random.default_rng(rng_seed)
    iu, ju = np.triu_indices(V, k=1)
    for _ in range(MAX_ATTEMPTS):
        keep = rng.random(iu.size) < p_edge
        edges = set(zip(iu[keep].tolist(), ju[keep].tolist()))
        if _is_connected(V, edges):
            return Graph(V, frozenset(edges))
    raise GraphError(f"no connected graph after {MAX_ATTEMPTS} draws; p_edge={p_edge} too small for V={V}")


def complete_graph(V: int) -> Graph:
    return Graph(V, frozenset((i, j) for i in range(V) for j in range(i + 1, V)))


@dataclass(frozen=True)
class NeighborEvals:
    """Evaluations f_j(x_b) of each neighbor j at every sample of one agent's batch.

    ``values`` has shape ``(len(neighbors), B, D)``.
    """

    neighbors: tuple
    values: np.ndarray

    def sum_over_neighbors(self, B: int, D: int) -> np.ndarray:
        if not self.neighbors:
            return np.zeros((B, D))
        return self.values.sum(axis=0)


@dataclass
class CommStats:
    vectors_sent: int = 0
    scalars_returned: int = 0

    def add(self, other: "CommStats") -> None:
        self.vectors_sent += other.vectors_sent
        self.scalars_returned += other.scalars_returned


def exchange_round(graph: Graph, functions: list[FunctionExpansion], batches: list[np.ndarray]):
    """Simulate one synchronous exchange on a pre-round snapshot.

    ``batches[i]`` is the ``p x B_i`` matrix of agent i's sample points. Each
    agent sends its points to every neighbor and receives back the neighbor's
    activation vectors there. Returns ``(evals, stats)`` with one
    :class:`NeighborEvals` per agent.
    """
    if len(functions) != graph.num_agents or len(batches) != graph.num_agents:
        raise ValueError("need one function and one batch per agent")
    stats = CommStats()
    evals = []
    for i in range(graph.num_agents):
        nbrs = tuple(graph.neighbors(i))
        X = np.asarray(batches[i], dtype=float)
        B, D = X.shape[1], functions[i].classes
        if nbrs:
            values = np.stack([evaluate_many(functions[j], X) for j in nbrs])
        else:
            values = np.zeros((0, B, D))
        evals.append(NeighborEvals(nbrs, values))
        stats.vectors_sent += len(nbrs) * B
        stats.scalars_returned += len(nbrs) * B * D
    return evals, stats
