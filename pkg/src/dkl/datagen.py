"""Gaussian-mixture benchmark data, CSV datasets and per-agent sample streams.

Randomness comes from numpy's PCG64 bit generator seeded through
``SeedSequence``; normals use numpy's ziggurat transform. The mixture centers
and the per-sample draws use separate child streams, so the same seed with a
larger ``n`` extends the sample stream without changing its prefix.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class GmmSpec:
    classes: int = 5
    dim: int = 2
    modes_per_class: int = 3
    class_center_radius: float = 1.0
    sigma_sq_centers: float = 1.0
    sigma_sq_data: float = 0.2

    def __post_init__(self):
        if self.classes < 1 or self.modes_per_class < 1:
            raise DataError("classes and modes_per_class must be at least 1")
        if self.dim != 2:
            raise DataError(f"class centers lie on the unit circle, so dim must be 2 (got {self.dim})")
        if not (self.sigma_sq_centers >= 0 and self.sigma_sq_data >= 0):
            raise DataError("variances must be nonnegative")

    def class_centers(self) -> np.ndarray:
        """``D x 2`` array of equally spaced points on the circle, class y at angle 2*pi*y/D."""
        ang = 2.0 * np.pi * np.arange(1, self.classes + 1) / self.classes
        return self.class_center_radius * np.column_stack([np.cos(ang), np.sin(ang)])


@dataclass(frozen=True, eq=False)
class Dataset:
    """``features`` is ``N x p``; ``labels`` are 1-based class indices."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        X = np.array(self.features, dtype=float)
        y = np.array(self.labels, dtype=int).ravel()
        if X.ndim != 2:
            raise DataError(f"features must be N x p, got shape {X.shape}")
        if X.shape[0] != y.size:
            raise DataError(f"{X.shape[0]} feature rows but {y.size} labels")
        if not np.all(np.isfinite(X)):
            raise DataError("non-finite feature values")
        if y.size and y.min() < 1:
            raise DataError("labels must be positive class indices")
        X.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    def __len__(self):
        return self.labels.size

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def validate_classes(self, classes: int) -> None:
        if len(self) and self.labels.max() > classes:
            raise DataError(f"label {self.labels.max()} outside 1..{classes}")

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.features.shape == other.features.shape
                and np.array_equal(self.features, other.features)
                and np.array_equal(self.labels, other.labels))


def _mixture_centers(spec: GmmSpec, rng_seed: int) -> np.ndarray:
    """``D x J x 2`` mode centers, each drawn around its class center."""
    rng = np.random.default_rng(np.random.SeedSequence([rng_seed, 0]))
    noise = rng.standard_normal((spec.classes, spec.modes_per_class, spec.dim))
    return spec.class_centers()[:, None, :] + np.sqrt(spec.sigma_sq_centers) * noise


def sample_gmm(spec: GmmSpec, n: int, rng_seed: int, stream: int = 0) -> Dataset:
    """Draw ``n`` labelled points from the mixture fixed by ``rng_seed``.

    Different ``stream`` values give independent samples from the same mixture
    (train and test share the mode centers).
    """
    if n < 0:
        raise DataError("n must be nonnegative")
    mu = _mixture_centers(spec, rng_seed)
    choice_rng = np.random.default_rng(np.random.SeedSequence([rng_seed, 1, stream]))
    noise_rng = np.random.default_rng(np.random.SeedSequence([rng_seed, 2, stream]))
    u = choice_rng.random((n, 2))
    y = np.minimum((u[:, 0] * spec.classes).astype(int), spec.classes - 1)
    j = np.minimum((u[:, 1] * spec.modes_per_class).astype(int), spec.modes_per_class - 1)
    z = noise_rng.standard_normal((n, spec.dim))
    X = mu[y, j] + np.sqrt(spec.sigma_sq_data) * z
    return Dataset(X.reshape(n, spec.dim), y + 1)


def save_csv(ds: Dataset, path) -> None:
    p = ds.features.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"f{k + 1}" for k in range(p)] + ["label"])
        for x, lbl in zip(ds.features, ds.labels):
            w.writerow([repr(float(v)) for v in x] + [int(lbl)])


def load_csv(path) -> Dataset:
    with open(path, newline="") as fh:
        rows = csv.reader(fh)
        try:
            header = next(rows)
        except StopIteration:
            raise DataError(f"{path}: missing header line") from None
        if not header or header[-1].strip() != "label":
            raise DataError(f"{path}: header must end with 'label', got {header}")
        p = len(header) - 1
        feats, labels = [], []
        for lineno, row in enumerate(rows, start=2):
            if not row:
                continue
            if len(row) != p + 1:
                raise DataError(f"{path}: line {lineno}: expected {p + 1} fields, got {len(row)}")
            try:
                feats.append([float(v) for v in row[:p]])
                labels.append(int(row[p]))
            except ValueError as exc:
                raise DataError(f"{path}: line {lineno}: {exc}") from None
    X = np.array(feats, dtype=float).reshape(len(labels), p)
    return Dataset(X, np.array(labels, dtype=int))


class AgentStream:
    """Cyclic pass over an agent-specific permutation of a shared dataset."""

    def __init__(self, data: Dataset, run_seed: int, agent_id: int):
        if len(data) == 0:
            raise DataError("cannot stream an empty dataset")
        self.data = data
        rng = np.random.default_rng(np.random.SeedSequence([run_seed, agent_id, 7]))
        self.order = rng.permutation(len(data))
        self.pos = 0

    def next_batch(self, size: int):
        """Return ``(X, y)`` with ``X`` as a ``p x size`` matrix of points."""
        n = len(self.order)
        idx = self.order[(self.pos + np.arange(size)) % n]
        self.pos = (self.pos + size) % n
        return self.data.features[idx].T, self.data.labels[idx]
