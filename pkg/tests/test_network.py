from collections import deque

import numpy as np
import pytest

from dkl.kernel import KernelSpec
from dkl.network import (Graph, GraphError, complete_graph, exchange_round, neighbors,
                         random_connected_graph)
from dkl.rkhs import FunctionExpansion, evaluate

G06 = KernelSpec.gaussian(0.6)


def bfs_reachable(g):
    adj = {i: set() for i in range(g.num_agents)}
    for i, j in g.edges:
        adj[i].add(j)
        adj[j].add(i)
    seen, todo = {0}, deque([0])
    while todo:
        u = todo.popleft()
        for v in adj[u] - seen:
            seen.add(v)
            todo.append(v)
    return seen


class TestGraph:
    def test_single_agent(self):
        g = random_connected_graph(1, 0.5, 0)
        assert g.edges == frozenset()
        assert g.neighbors(0) == []

    def test_pair_complete(self):
        g = random_connected_graph(2, 1.0, 0)
        assert g.edges == {(0, 1)}
        assert neighbors(g, 0) == [1]

    @pytest.mark.parametrize("seed", range(10))
    def test_twenty_agents_connected_by_bfs(self, seed):
        g = random_connected_graph(20, 0.2, seed)
        assert bfs_reachable(g) == set(range(20))

    def test_symmetric_sorted_no_self(self):
        g = random_connected_graph(15, 0.3, 4)
        for i in range(15):
            nb = g.neighbors(i)
            assert nb == sorted(nb) and i not in nb
            assert all(i in g.neighbors(j) for j in nb)

    def test_deterministic(self):
        assert random_connected_graph(20, 0.2, 7) == random_connected_graph(20, 0.2, 7)

    def test_star_center(self):
        g = Graph(5, frozenset((0, k) for k in range(1, 5)))
        assert g.neighbors(0) == [1, 2, 3, 4]

    def test_disconnected_rejected(self):
        with pytest.raises(GraphError):
            Graph(3, frozenset({(0, 1)}))

    def test_self_loop_rejected(self):
        with pytest.raises(GraphError):
            Graph(2, frozenset({(0, 0), (0, 1)}))

    def test_cap_exceeded(self, monkeypatch):
        import dkl.network as net
        monkeypatch.setattr(net, "MAX_ATTEMPTS", 5)
        with pytest.raises(GraphError, match="too small"):
            random_connected_graph(30, 0.001, 0)

    def test_bad_probability(self):
        with pytest.raises(GraphError):
            random_connected_graph(3, 0.0, 0)

    def test_neighbor_index_range(self):
        with pytest.raises(IndexError):
            complete_graph(3).neighbors(3)

    def test_edge_list_round_trip(self, tmp_path):
        g = random_connected_graph(12, 0.3, 1)
        g.save(tmp_path / "g.txt")
        text = (tmp_path / "g.txt").read_text().splitlines()
        assert text[0] == "12"
        pairs = [tuple(map(int, ln.split())) for ln in text[1:]]
        assert all(1 <= a < b <= 12 for a, b in pairs)
        assert Graph.load(tmp_path / "g.txt") == g


class TestExchange:
    def setup_method(self):
        rng = np.random.default_rng(0)
        self.g = random_connected_graph(6, 0.5, 3)
        self.fs = [FunctionExpansion(G06, rng.normal(size=(2, 3)), rng.normal(size=(3, 4))) for _ in range(6)]
        self.batches = [rng.normal(size=(2, 5)) for _ in range(6)]

    def test_zero_functions(self):
        zero = [FunctionExpansion.zero(G06, 2, 4)] * 6
        evals, _ = exchange_round(self.g, zero, self.batches)
        assert all(np.all(e.values == 0) for e in evals)

    def test_single_agent_empty(self):
        evals, stats = exchange_round(Graph(1), [self.fs[0]], [self.batches[0]])
        assert evals[0].neighbors == () and evals[0].values.shape == (0, 5, 4)
        assert stats.vectors_sent == 0

    def test_matches_direct_evaluation(self):
        evals, _ = exchange_round(self.g, self.fs, self.batches)
        for i, e in enumerate(evals):
            assert list(e.neighbors) == self.g.neighbors(i)
            for k, j in enumerate(e.neighbors):
                for b in range(5):
                    np.testing.assert_allclose(e.values[k, b], evaluate(self.fs[j], self.batches[i][:, b]), rtol=1e-13)

    def test_pure_and_counted(self):
        e1, s1 = exchange_round(self.g, self.fs, self.batches)
        e2, _ = exchange_round(self.g, self.fs, self.batches)
        assert all(np.array_equal(a.values, b.values) for a, b in zip(e1, e2))
        deg_sum = sum(len(self.g.neighbors(i)) for i in range(6))
        assert s1.vectors_sent == deg_sum * 5
        assert s1.scalars_returned == deg_sum * 5 * 4
