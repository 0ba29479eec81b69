"""Independent reference computations shared by the unit and acceptance tests."""
import numpy as np

from dkl.kernel import kernel_eval
from dkl.komp import komp
from dkl.losses import loss_grad
from dkl.rkhs import append_atoms, evaluate_many


def brute_gram(f):
    M = f.order
    return np.array([[kernel_eval(f.kernel, f.dictionary[:, m], f.dictionary[:, n]) for n in range(M)]
                     for m in range(M)])


def lstsq_gamma(f, kept, j):
    """Residual norm of the best approximation of ``f`` on atoms ``kept`` minus ``j``.

    Works in the feature coordinates given by the symmetric square root of the
    Gram matrix and uses an SVD least-squares solve, so it shares no code path
    with the normal-equation solver under test.
    """
    K = brute_gram(f)
    vals, vecs = np.linalg.eigh(K)
    R = (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T
    target = R @ f.weights
    cols = [k for k in kept if k != j]
    if not cols:
        return float(np.linalg.norm(target))
    coef, *_ = np.linalg.lstsq(R[:, cols], target, rcond=None)
    return float(np.linalg.norm(target - R[:, cols] @ coef))


def reference_single_agent(f0, stream, rounds, batch_size, eta, lam, epsilon, loss_spec):
    """Plain single-agent minibatch FSGD with KOMP, written without the network machinery."""
    f = f0
    for _ in range(rounds):
        X, y = stream.next_batch(batch_size)
        own = evaluate_many(f, X)
        grads = np.stack([loss_grad(loss_spec, own[b], y[b]) for b in range(batch_size)])
        f = komp(append_atoms(f, X, -(eta / batch_size) * grads, 1.0 - eta * lam), epsilon)
    return f
