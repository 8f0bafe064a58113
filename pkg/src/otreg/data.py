"""Datasets: synthetic generators, CSV ingestion, standardization, k-fold.

The synthetic recipes (seeded, pure functions of their arguments):

    sinus            y = sin(x) + z,            z ~ N(0,1), x ~ U[-4,4]
    exp              y = x + exp(z),            x, z ~ N(0,1)
    heteroscedastic  y = x + (0.001+0.5|x|)*z,  z ~ N(1,1), x ~ Laplace(0,1)
    multimodal       x ~ U[0,1]:
                       x < 0.4        y = 1.2x + 0.03z  or  x + 0.6 + 0.03z
                       0.4 <= x < 0.6 y = 0.5x + 0.01z  or  0.6x + 0.01z
                       x >= 0.6       y = 0.5 + 0.02z             (z ~ N(0,1),
                     two-branch regimes pick a branch by a fair coin)
    mixture          two-dimensional x drawn from a mixture of 200 Gaussians
                     (means uniform in [0,1]^2, isotropic stds in
                     [0.01, 0.1]); y = mixture density at x + small noise
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

DEFAULT_ROWS = 5000

MIXTURE_COMPONENTS = 200
MIXTURE_MEAN_BOX = (0.0, 1.0)
MIXTURE_STD_RANGE = (0.01, 0.1)
MIXTURE_NOISE_FRACTION = 0.01  # of the density values' standard deviation


@dataclass(frozen=True)
class StandardizationStats:
    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: np.ndarray
    y_std: np.ndarray


@dataclass
class Dataset:
    """Row-aligned feature matrix X (rows x n) and target matrix Y (rows x m).

    stats is populated by standardize() and records the per-column means and
    standard deviations that map back to the original units.
    """

    X: np.ndarray
    Y: np.ndarray
    stats: StandardizationStats | None = None

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=np.float64))
        Y = np.atleast_2d(np.asarray(self.Y, dtype=np.float64))
        if X.shape[0] != Y.shape[0]:
            raise ValueError("X and Y row counts differ")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise ValueError("dataset contains non-finite entries")
        self.X, self.Y = X, Y

    @property
    def rows(self) -> int:
        return self.X.shape[0]

    @property
    def n(self) -> int:
        return self.X.shape[1]

    @property
    def m(self) -> int:
        return self.Y.shape[1]

    def subset(self, indices) -> "Dataset":
        return Dataset(self.X[indices], self.Y[indices], stats=self.stats)


@dataclass(frozen=True)
class FoldSplit:
    """Disjoint test-index lists covering all rows."""

    folds: list

    def __post_init__(self):
        folds = [np.asarray(f, dtype=np.int64) for f in self.folds]
        all_idx = np.sort(np.concatenate(folds))
        if len(np.unique(all_idx)) != len(all_idx):
            raise ValueError("folds overlap")
        if not np.array_equal(all_idx, np.arange(len(all_idx))):
            raise ValueError("folds must cover all rows exactly once")
        object.__setattr__(self, "folds", folds)

    def __len__(self) -> int:
        return len(self.folds)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.sort(np.concatenate([f for i, f in enumerate(self.folds) if i != fold]))


def _column_dataset(x: np.ndarray, y: np.ndarray) -> Dataset:
    return Dataset(x.reshape(-1, 1), y.reshape(-1, 1))


def gen_sinus(n_rows: int = DEFAULT_ROWS, seed: int = 0) -> Dataset:
    """y = sin(x) + z with z ~ N(0,1), x ~ U[-4,4]."""
    if n_rows < 1:
        raise ValueError("n_rows must be >= 1")
    rng = np.random.default_rng(seed)
    x = rng.uniform(-4.0, 4.0, n_rows)
    y = np.sin(x) + rng.standard_normal(n_rows)
    return _column_dataset(x, y)


def gen_exp(n_rows: int = DEFAULT_ROWS, seed: int = 0) -> Dataset:
    """y = x + exp(z) with x, z ~ N(0,1)."""
    if n_rows < 1:
        raise ValueError("n_rows must be >= 1")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n_rows)
    y = x + np.exp(rng.standard_normal(n_rows))
    return _column_dataset(x, y)


def gen_heteroscedastic(n_rows: int = DEFAULT_ROWS, seed: int = 0) -> Dataset:
    """y = x + (0.001 + 0.5|x|) * z with z ~ N(1,1), x ~ Laplace(0,1)."""
    if n_rows < 1:
        raise ValueError("n_rows must be >= 1")
    rng = np.random.default_rng(seed)
    x = rng.laplace(0.0, 1.0, n_rows)
    z = rng.normal(1.0, 1.0, n_rows)
    y = x + (0.001 + 0.5 * np.abs(x)) * z
    return _column_dataset(x, y)


def gen_multimodal(n_rows: int = DEFAULT_ROWS, seed: int = 0) -> Dataset:
    """Piecewise multi-modal map on x ~ U[0,1]; see the module docstring."""
    if n_rows < 1:
        raise ValueError("n_rows must be >= 1")
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, 1.0, n_rows)
    z = rng.standard_normal(n_rows)
    coin = rng.random(n_rows) < 0.5
    low = np.where(coin, 1.2 * x, x + 0.6) + 0.03 * z
    mid = np.where(coin, 0.5 * x, 0.6 * x) + 0.01 * z
    high = 0.5 + 0.02 * z
    y = np.where(x < 0.4, low, np.where(x < 0.6, mid, high))
    return _column_dataset(x, y)


def mixture_components(seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Seeded Gaussian-mixture components (means, stds) of the mixture set."""
    rng = np.random.default_rng(seed)
    lo, hi = MIXTURE_MEAN_BOX
    means = rng.uniform(lo, hi, size=(MIXTURE_COMPONENTS, 2))
    stds = rng.uniform(*MIXTURE_STD_RANGE, size=MIXTURE_COMPONENTS)
    return means, stds


def mixture_density(x: np.ndarray, means: np.ndarray, stds: np.ndarray) -> np.ndarray:
    """Gaussian-mixture probability density at the rows of x (rows x 2)."""
    x = np.atleast_2d(x)
    d2 = ((x[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
    comp = np.exp(-0.5 * d2 / stds**2) / (2.0 * np.pi * stds**2)
    return comp.mean(axis=1)


def gen_mixture_density(seed: int = 0, n_rows: int = DEFAULT_ROWS) -> Dataset:
    """Two-dimensional x from a 200-component Gaussian mixture; y is the
    mixture density at x plus a small Gaussian noise."""
    if n_rows < 1:
        raise ValueError("n_rows must be >= 1")
    means, stds = mixture_components(seed)
    rng = np.random.default_rng(seed + 1)
    comp = rng.integers(0, MIXTURE_COMPONENTS, size=n_rows)
    x = means[comp] + stds[comp, None] * rng.standard_normal((n_rows, 2))
    density = mixture_density(x, means, stds)
    sigma_small = MIXTURE_NOISE_FRACTION * density.std()
    y = density + sigma_small * rng.standard_normal(n_rows)
    return Dataset(x, y.reshape(-1, 1))


BUILTIN_GENERATORS = {
    "sinus": gen_sinus,
    "exp": gen_exp,
    "heteroscedastic": gen_heteroscedastic,
    "multimodal": gen_multimodal,
}


def generate_builtin(name: str, n_rows: int = DEFAULT_ROWS, seed: int = 0) -> Dataset:
    """Dispatch on a builtin dataset name (including 'mixture')."""
    if name == "mixture":
        return gen_mixture_density(seed=seed, n_rows=n_rows)
    if name not in BUILTIN_GENERATORS:
        known = sorted(BUILTIN_GENERATORS) + ["mixture"]
        raise ValueError(f"unknown dataset {name!r}; known: {', '.join(known)}")
    return BUILTIN_GENERATORS[name](n_rows=n_rows, seed=seed)


def save_csv(dataset: Dataset, path) -> None:
    """Write the dataset with header columns x_0.. and y_0.. at full float
    precision, so a load round-trips exactly."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = [f"x_{i}" for i in range(dataset.n)] + [f"y_{i}" for i in range(dataset.m)]
        writer.writerow(header)
        for xi, yi in zip(dataset.X, dataset.Y):
            writer.writerow([f"{v:.17g}" for v in xi] + [f"{v:.17g}" for v in yi])


def load_csv(path, target_columns: list[str] | None = None) -> Dataset:
    """Read a headered CSV; columns prefixed y_ (or named in target_columns)
    are targets, the rest are features."""
    try:
        fh = open(path, "r", newline="")
    except OSError as exc:
        raise ValueError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file, expected a header row")
        header = [h.strip() for h in header]
        if target_columns is not None:
            missing = [c for c in target_columns if c not in header]
            if missing:
                raise ValueError(f"{path}: target columns not found: {missing}")
            is_target = [h in set(target_columns) for h in header]
        else:
            is_target = [h.startswith("y_") for h in header]
        if not any(is_target):
            raise ValueError(
                f"{path}: no target columns (need a y_ prefix or an explicit list)"
            )
        x_rows, y_rows = [], []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ValueError(
                    f"{path}: row {lineno} has {len(row)} cells, expected {len(header)}"
                )
            xs, ys = [], []
            for col, cell in enumerate(row):
                try:
                    value = float(cell)
                except ValueError:
                    raise ValueError(
                        f"{path}: row {lineno}, column {header[col]!r}: "
                        f"non-numeric cell {cell!r}"
                    )
                (ys if is_target[col] else xs).append(value)
            x_rows.append(xs)
            y_rows.append(ys)
        if not x_rows:
            raise ValueError(f"{path}: no data rows")
    return Dataset(np.array(x_rows), np.array(y_rows))


def standardize(dataset: Dataset) -> tuple[Dataset, StandardizationStats]:
    """Scale every X and Y column to zero mean and unit variance
    (population convention); constant columns are rejected."""
    x_mean, x_std = dataset.X.mean(axis=0), dataset.X.std(axis=0)
    y_mean, y_std = dataset.Y.mean(axis=0), dataset.Y.std(axis=0)
    bad = [f"x_{i}" for i in np.flatnonzero(x_std < 1e-12)]
    bad += [f"y_{i}" for i in np.flatnonzero(y_std < 1e-12)]
    if bad:
        raise ValueError(f"constant columns cannot be standardized: {bad}")
    stats = StandardizationStats(x_mean, x_std, y_mean, y_std)
    out = Dataset(
        (dataset.X - x_mean) / x_std,
        (dataset.Y - y_mean) / y_std,
        stats=stats,
    )
    return out, stats


def inverse_transform(y: np.ndarray, stats: StandardizationStats) -> np.ndarray:
    """Map standardized targets back to original units."""
    return np.asarray(y) * stats.y_std + stats.y_mean


def kfold(dataset: Dataset, k: int = 5, seed: int = 0) -> FoldSplit:
    """Seeded shuffle, then a contiguous partition into k folds whose sizes
    differ by at most one."""
    if dataset.rows < k:
        raise ValueError(f"need at least {k} rows, got {dataset.rows}")
    if k < 2:
        raise ValueError("k must be >= 2")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(dataset.rows)
    return FoldSplit(folds=[np.sort(f) for f in np.array_split(perm, k)])
