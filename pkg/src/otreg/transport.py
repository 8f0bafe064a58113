"""Ground costs and empirical transport between real and generated samples.

The unit cost between two labeled samples is a weighted L_p distance

    c(a, b) = [ (lam/n) * sum_i |x_a,i - x_b,i|^p
              + ((1-lam)/m) * sum_i |y_a,i - y_b,i|^p ] ** (1/p)

with lam in [0, 1] steering how strongly the matching is confined to the
x-neighborhood. The empirical transport cost between two equal-size sample
sets is the mean matched unit cost under a minimum-cost perfect matching,
solved either on the dense cost matrix or on a matrix sparsified to the
k nearest unique x-neighbors of each row.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .lap import Assignment, CostMatrix, SparseCostMatrix, solve_dense, solve_sparse


@dataclass(frozen=True)
class LabeledSample:
    """One (x, y) pair; element of both the real set and the fake set."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x, dtype=np.float64))
        y = np.atleast_1d(np.asarray(self.y, dtype=np.float64))
        if x.ndim != 1 or y.ndim != 1:
            raise ValueError("x and y must be vectors")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("sample entries must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)


@dataclass
class TransportConfig:
    """Ground-cost and sparsification settings.

    lam: weight of the x-term (1-lam goes to the y-term).
    p: L_p exponent, >= 1.
    k_neighbors: unique x-neighbors kept per row in sparse mode.
    n, m: feature and target dimensions.
    """

    lam: float = 0.9
    p: float = 1.0
    k_neighbors: int = 10
    n: int = 1
    m: int = 1

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lam must lie in [0, 1], got {self.lam}")
        if self.p < 1.0:
            raise ValueError(f"p must be >= 1, got {self.p}")
        if self.k_neighbors < 1:
            raise ValueError(f"k_neighbors must be >= 1, got {self.k_neighbors}")
        if self.n < 1 or self.m < 1:
            raise ValueError("dimensions must be positive")


@dataclass(frozen=True)
class TransportPlan:
    """Perfect matching between reals and fakes; total_cost is the raw
    (unnormalized) sum of matched unit costs."""

    pairs: np.ndarray  # (N, 2) rows of (real index, fake index)
    total_cost: float

    def __post_init__(self):
        pairs = np.asarray(self.pairs, dtype=np.int64)
        n = len(pairs)
        if pairs.shape != (n, 2):
            raise ValueError("pairs must be (N, 2)")
        if not (
            np.array_equal(np.sort(pairs[:, 0]), np.arange(n))
            and np.array_equal(np.sort(pairs[:, 1]), np.arange(n))
        ):
            raise ValueError("pairs must form a perfect matching")
        if self.total_cost < 0:
            raise ValueError("total_cost must be non-negative")
        object.__setattr__(self, "pairs", pairs)


def _check_dims(a: LabeledSample, b: LabeledSample, cfg: TransportConfig) -> None:
    for s in (a, b):
        if s.x.shape != (cfg.n,) or s.y.shape != (cfg.m,):
            raise ValueError(
                f"sample dims ({s.x.shape[0]}, {s.y.shape[0]}) do not match "
                f"config ({cfg.n}, {cfg.m})"
            )


def unit_cost(a: LabeledSample, b: LabeledSample, cfg: TransportConfig) -> float:
    """Weighted L_p ground cost between two labeled samples."""
    _check_dims(a, b, cfg)
    inner = (cfg.lam / cfg.n) * np.sum(np.abs(a.x - b.x) ** cfg.p) + (
        (1.0 - cfg.lam) / cfg.m
    ) * np.sum(np.abs(a.y - b.y) ** cfg.p)
    return float(inner ** (1.0 / cfg.p))


def unit_cost_grad_fake_y(
    a: LabeledSample, b: LabeledSample, cfg: TransportConfig
) -> np.ndarray:
    """Partial derivative of unit_cost(a, b) in b's y components.

    b is the generated sample; its x enters the cost but is an input, not a
    trained quantity. At p = 1 this is the subgradient
    ((1-lam)/m) * sign(y_b - y_a) with sign(0) := 0; for p > 1 the analytic
    derivative, defined as zero at coincident points.
    """
    _check_dims(a, b, cfg)
    dy = b.y - a.y
    wy = (1.0 - cfg.lam) / cfg.m
    if cfg.p == 1.0:
        return wy * np.sign(dy)
    inner = (cfg.lam / cfg.n) * np.sum(np.abs(a.x - b.x) ** cfg.p) + wy * np.sum(
        np.abs(dy) ** cfg.p
    )
    if inner == 0.0:
        return np.zeros_like(dy)
    # d/dy_i [inner^(1/p)] = inner^(1/p - 1) * wy * |dy_i|^(p-1) * sign(dy_i)
    return inner ** (1.0 / cfg.p - 1.0) * wy * np.abs(dy) ** (cfg.p - 1.0) * np.sign(dy)


def _stack(samples: list[LabeledSample], cfg: TransportConfig) -> tuple[np.ndarray, np.ndarray]:
    X = np.stack([s.x for s in samples])
    Y = np.stack([s.y for s in samples])
    if X.shape[1] != cfg.n or Y.shape[1] != cfg.m:
        raise ValueError(
            f"sample dims ({X.shape[1]}, {Y.shape[1]}) do not match "
            f"config ({cfg.n}, {cfg.m})"
        )
    return X, Y


def _cost_block(
    Xr: np.ndarray, Yr: np.ndarray, Xf: np.ndarray, Yf: np.ndarray, cfg: TransportConfig
) -> np.ndarray:
    sx = cdist(Xr, Xf, "minkowski", p=cfg.p) ** cfg.p
    sy = cdist(Yr, Yf, "minkowski", p=cfg.p) ** cfg.p
    inner = (cfg.lam / cfg.n) * sx + ((1.0 - cfg.lam) / cfg.m) * sy
    return inner ** (1.0 / cfg.p)


def build_dense_cost(
    reals: list[LabeledSample], fakes: list[LabeledSample], cfg: TransportConfig
) -> CostMatrix:
    """Dense N x N matrix of unit costs, entry (i, j) = c(reals[i], fakes[j])."""
    if len(reals) != len(fakes):
        raise ValueError(f"need equal set sizes, got {len(reals)} vs {len(fakes)}")
    if not reals:
        raise ValueError("sample sets must be non-empty")
    Xr, Yr = _stack(reals, cfg)
    Xf, Yf = _stack(fakes, cfg)
    return CostMatrix(_cost_block(Xr, Yr, Xf, Yf, cfg))


def _neighbor_groups(
    unique_x: np.ndarray, k: int, p: float
) -> list[np.ndarray]:
    """k nearest unique groups of each unique group by L_p distance on x,
    ties broken by lower group index; the group itself is always included."""
    g = len(unique_x)
    k = min(k, g)
    dists = cdist(unique_x, unique_x, "minkowski", p=p)
    order = np.argsort(dists, axis=1, kind="stable")
    out = []
    for u in range(g):
        nbr = set(order[u, :k].tolist())
        nbr.add(u)  # self-match must stay feasible even under distance ties
        out.append(np.array(sorted(nbr), dtype=np.int64))
    return out


def build_sparse_cost(
    reals: list[LabeledSample],
    fakes: list[LabeledSample],
    cfg: TransportConfig,
    parent_of_fake: np.ndarray,
    parent_of_real: np.ndarray | None = None,
) -> SparseCostMatrix:
    """Cost matrix pruned to the k nearest unique x-neighbors per row.

    ``parent_of_fake[j]`` is the unique-real group whose x produced fakes[j].
    Reals are expected to be the same unique samples repeated; by default row
    i is assumed to belong to group ``parent_of_fake[i]`` (the layout
    produced by batch assembly), which ``parent_of_real`` can override.
    Row i keeps entries exactly for the fakes whose parent group is among the
    k nearest unique groups of row i's group (self always included).
    """
    if len(reals) != len(fakes):
        raise ValueError(f"need equal set sizes, got {len(reals)} vs {len(fakes)}")
    N = len(reals)
    parent_of_fake = np.asarray(parent_of_fake, dtype=np.int64)
    if parent_of_fake.shape != (N,):
        raise ValueError("parent_of_fake must map every fake to a group")
    if parent_of_real is None:
        parent_of_real = parent_of_fake
    else:
        parent_of_real = np.asarray(parent_of_real, dtype=np.int64)
        if parent_of_real.shape != (N,):
            raise ValueError("parent_of_real must map every real to a group")

    Xr, Yr = _stack(reals, cfg)
    Xf, Yf = _stack(fakes, cfg)
    groups = np.unique(np.concatenate([parent_of_real, parent_of_fake]))
    g = len(groups)
    if not np.array_equal(groups, np.arange(g)):
        raise ValueError("groups must be labeled 0..g-1")
    # one representative x per group, taken from the first real in the group
    first_real = np.full(g, -1, dtype=np.int64)
    for i in range(N - 1, -1, -1):
        first_real[parent_of_real[i]] = i
    if np.any(first_real < 0):
        raise ValueError("every group needs at least one real row")
    unique_x = Xr[first_real]

    neighbors = _neighbor_groups(unique_x, cfg.k_neighbors, cfg.p)
    fake_cols_of_group = [np.flatnonzero(parent_of_fake == u) for u in range(g)]

    counts = np.empty(N, dtype=np.int64)
    group_cols: list[np.ndarray] = []
    for u in range(g):
        cols = np.sort(np.concatenate([fake_cols_of_group[v] for v in neighbors[u]]))
        group_cols.append(cols)
    for i in range(N):
        counts[i] = len(group_cols[parent_of_real[i]])
    indptr = np.zeros(N + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    indices = np.empty(indptr[-1], dtype=np.int64)
    data = np.empty(indptr[-1])
    for u in range(g):
        cols = group_cols[u]
        rows = np.flatnonzero(parent_of_real == u)
        block = _cost_block(Xr[rows], Yr[rows], Xf[cols], Yf[cols], cfg)
        for r, i in enumerate(rows):
            indices[indptr[i] : indptr[i + 1]] = cols
            data[indptr[i] : indptr[i + 1]] = block[r]
    return SparseCostMatrix(N, indptr, indices, data)


def _groups_by_x(reals: list[LabeledSample], fakes: list[LabeledSample]):
    """Group reals and fakes by exact x value, in order of first appearance
    among the reals. Every fake must reuse the x of some real."""
    key_to_group: dict[bytes, int] = {}
    parent_real = np.empty(len(reals), dtype=np.int64)
    for i, s in enumerate(reals):
        key = s.x.tobytes()
        if key not in key_to_group:
            key_to_group[key] = len(key_to_group)
        parent_real[i] = key_to_group[key]
    parent_fake = np.empty(len(fakes), dtype=np.int64)
    for j, s in enumerate(fakes):
        key = s.x.tobytes()
        if key not in key_to_group:
            raise ValueError("every fake must share its x with some real")
        parent_fake[j] = key_to_group[key]
    return parent_real, parent_fake


def ot_cost_and_plan(
    reals: list[LabeledSample],
    fakes: list[LabeledSample],
    cfg: TransportConfig,
    mode: str = "dense",
) -> tuple[float, TransportPlan]:
    """Empirical transport cost (mean matched unit cost) and the matching.

    In sparse mode fakes must be generated at x values taken from the reals;
    rows are grouped by exact x to recover the parent structure.
    """
    if mode not in ("dense", "sparse"):
        raise ValueError(f"mode must be 'dense' or 'sparse', got {mode!r}")
    if len(reals) != len(fakes):
        raise ValueError(f"need equal set sizes, got {len(reals)} vs {len(fakes)}")
    if mode == "dense":
        assignment = solve_dense(build_dense_cost(reals, fakes, cfg))
    else:
        parent_real, parent_fake = _groups_by_x(reals, fakes)
        sparse = build_sparse_cost(reals, fakes, cfg, parent_fake, parent_real)
        assignment = solve_sparse(sparse)
    n = len(reals)
    pairs = np.column_stack([np.arange(n), assignment.row_to_col])
    plan = TransportPlan(pairs=pairs, total_cost=assignment.total_cost)
    return assignment.total_cost / n, plan


def wasserstein_p(ot_cost: float, p: float) -> float:
    """Wasserstein-p distance from a transport cost built on L_p^p ground
    cost: the cost raised to 1/p."""
    if ot_cost < 0:
        raise ValueError(f"transport cost must be non-negative, got {ot_cost}")
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    return float(ot_cost ** (1.0 / p))
