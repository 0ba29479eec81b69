import numpy as np
import pytest

from dkl.kernel import KernelSpec
from dkl.losses import LossSpec, loss_grad
from dkl.network import NeighborEvals
from dkl.gppm import AgentState, RoundInfo, StepParams, agent_round, clip_to_ball, local_gradient_step
from dkl.rkhs import FunctionExpansion, evaluate_many, hilbert_dist_sq, hilbert_norm_sq

G06 = KernelSpec.gaussian(0.6)
LOG2 = LossSpec("logistic", 2)


def no_nbrs(B, D):
    return NeighborEvals((), np.zeros((0, B, D)))


def random_f(rng, M, D=2):
    return FunctionExpansion(G06, rng.normal(size=(2, M)), rng.normal(size=(M, D)))


class TestStepParams:
    def test_eta_lambda_bound(self):
        with pytest.raises(ValueError):
            StepParams(eta=2.0, lam=0.5)

    def test_positive_eta(self):
        with pytest.raises(ValueError):
            StepParams(eta=0.0)


class TestLocalStep:
    def test_zero_init_single_sample(self):
        agent = AgentState(0, FunctionExpansion.zero(G06, 2, 2))
        out = local_gradient_step(agent, [([0.5, 0.5], 1)], no_nbrs(1, 2), StepParams(eta=1.0), LOG2)
        assert out.order == 1
        np.testing.assert_allclose(out.weights[0], [0.5, -0.5], rtol=1e-15)
        np.testing.assert_array_equal(out.dictionary[:, 0], [0.5, 0.5])

    def test_matrix_and_pair_batches_agree(self):
        rng = np.random.default_rng(0)
        agent = AgentState(0, random_f(rng, 4))
        X, y = rng.normal(size=(2, 3)), np.array([1, 2, 2])
        p = StepParams(eta=0.3, lam=0.1)
        a = local_gradient_step(agent, (X, y), no_nbrs(3, 2), p, LOG2)
        b = local_gradient_step(agent, list(zip(X.T, y)), no_nbrs(3, 2), p, LOG2)
        np.testing.assert_array_equal(a.weights, b.weights)

    def test_matches_hand_formula(self):
        rng = np.random.default_rng(1)
        f, g1, g2 = random_f(rng, 3, 3), random_f(rng, 2, 3), random_f(rng, 4, 3)
        spec = LossSpec("logistic", 3)
        X, y = rng.normal(size=(2, 4)), np.array([1, 3, 2, 2])
        nbr = NeighborEvals((1, 2), np.stack([evaluate_many(g1, X), evaluate_many(g2, X)]))
        p = StepParams(eta=0.7, lam=0.2, c=0.9)
        out = local_gradient_step(AgentState(0, f, (1, 2)), (X, y), nbr, p, spec)
        own = evaluate_many(f, X)
        want = np.stack([-(0.7 / 4) * (loss_grad(spec, own[b], y[b])
                                       + 0.9 * ((own[b] - nbr.values[0, b]) + (own[b] - nbr.values[1, b])))
                         for b in range(4)])
        np.testing.assert_allclose(out.weights[3:], want, rtol=1e-12)
        np.testing.assert_allclose(out.weights[:3], (1 - 0.7 * 0.2) * f.weights, rtol=1e-15)

    def test_lambda_zero_keeps_old_weights(self):
        rng = np.random.default_rng(2)
        f = random_f(rng, 3)
        out = local_gradient_step(AgentState(0, f), (rng.normal(size=(2, 2)), np.array([1, 2])),
                                  no_nbrs(2, 2), StepParams(eta=0.5), LOG2)
        np.testing.assert_array_equal(out.weights[:3], f.weights)

    def test_c_zero_ignores_neighbors(self):
        rng = np.random.default_rng(3)
        f, X, y = random_f(rng, 3), rng.normal(size=(2, 2)), np.array([2, 1])
        nbr = NeighborEvals((1,), rng.normal(size=(1, 2, 2)) * 100)
        p = StepParams(eta=0.5, c=0.0)
        a = local_gradient_step(AgentState(0, f, (1,)), (X, y), nbr, p, LOG2)
        b = local_gradient_step(AgentState(0, f), (X, y), no_nbrs(2, 2), p, LOG2)
        np.testing.assert_array_equal(a.weights, b.weights)

    def test_satisfied_hinge_only_shrinks(self):
        f = FunctionExpansion(G06, [[0.0], [0.0]], [[10.0, 0.0]])
        out = local_gradient_step(AgentState(0, f), [([0.0, 0.0], 1)], no_nbrs(1, 2),
                                  StepParams(eta=0.5, lam=0.1), LossSpec("hinge", 2))
        np.testing.assert_allclose(out.weights, [[9.5, 0.0], [0.0, 0.0]], rtol=1e-15)

    def test_neighbor_shape_checked(self):
        f = FunctionExpansion.zero(G06, 2, 2)
        with pytest.raises(ValueError):
            local_gradient_step(AgentState(0, f, (1,)), [([0, 0], 1)], no_nbrs(1, 2), StepParams(eta=1.0), LOG2)

    def test_empty_batch(self):
        with pytest.raises(ValueError):
            local_gradient_step(AgentState(0, FunctionExpansion.zero(G06, 2, 2)), [], no_nbrs(0, 2),
                                StepParams(eta=1.0), LOG2)


class TestAgentRound:
    @pytest.mark.parametrize("seed", range(5))
    def test_order_and_budget(self, seed):
        rng = np.random.default_rng(seed)
        f = random_f(rng, 6)
        B = 5
        X, y = rng.uniform(-1, 1, (2, B)), rng.integers(1, 3, size=B)
        eta = 0.5
        p = StepParams(eta=eta, lam=1e-3, epsilon=0.04 * eta ** 1.5)
        info = []
        out = agent_round(AgentState(0, f), (X, y), no_nbrs(B, 2), p, LOG2, info=info)
        assert out.f.order <= f.order + B
        r = info[0]
        assert isinstance(r, RoundInfo) and r.order_tilde == f.order + B
        assert r.projection_error <= p.epsilon + 1e-10
        # the per-step approximation error relative to eta stays within epsilon/eta
        assert r.projection_error / eta <= p.epsilon / eta + 1e-10

    def test_ball_clip(self):
        rng = np.random.default_rng(9)
        f = random_f(rng, 4)
        g = clip_to_ball(f, 0.1)
        assert np.sqrt(hilbert_norm_sq(g)) == pytest.approx(0.1, rel=1e-12)
        assert clip_to_ball(f, None) is f
        assert hilbert_dist_sq(clip_to_ball(f, 1e9), f) == 0.0
