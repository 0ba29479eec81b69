"""Decentralized online kernel classifiers: penalized functional SGD with KOMP compression."""
from .kernel import KernelSpec, cross_kernel, gram_matrix, kernel_eval
from .komp import KompBudget, komp, prune_error, refit
from .losses import LossSpec, loss, loss_grad, predict
from .rkhs import FunctionExpansion, append_atoms, evaluate, hilbert_dist_sq, hilbert_norm_sq

__version__ = "0.1.0"
