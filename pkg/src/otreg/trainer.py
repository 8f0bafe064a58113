"""Mini-batch training of the generator by transport-cost descent.

Each step draws a mini-batch of real rows, repeats every selected (x, y)
sample_size times, generates one fake per repeated row at the same x, solves
the assignment problem between the two sets (dense or sparsified to the
k nearest unique x-neighbors), and backpropagates the matched ground-cost
gradient through the generator. Early stopping tracks the trimmed NLPD on a
held-out validation split.
"""

from __future__ import annotations

import csv
import dataclasses
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import evaluation
from .data import Dataset
from .generator import AdamState, GeneratorParams, adam_step, backward, forward
from .lap import InfeasibleMatchingError, solve_dense, solve_sparse
from .transport import (
    LabeledSample,
    TransportConfig,
    build_dense_cost,
    build_sparse_cost,
)

log = logging.getLogger(__name__)

MODES = ("dense", "sparse")


@dataclass
class TrainConfig:
    mode: str = "dense"
    batch_size: int = 100
    sample_size: int = 10
    lam: float = 0.9
    p: float = 1.0
    k_neighbors: int = 10
    learning_rate: float = 0.001
    patience_epochs: int = 10
    max_epochs: int = 100
    seed: int = 0
    validation_fraction: float = 0.2
    nlpd_val_samples: int = 200
    noise_dim: int = 1
    hidden: int = 16
    bandwidth_grid: tuple = evaluation.DEFAULT_BANDWIDTH_GRID
    trim: tuple[float, float] = evaluation.DEFAULT_TRIM

    def __post_init__(self):
        problems = []
        if self.mode not in MODES:
            problems.append(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.batch_size < 2:
            problems.append("batch_size must be >= 2")
        if self.sample_size < 1:
            problems.append("sample_size must be >= 1")
        if self.patience_epochs < 1:
            problems.append("patience_epochs must be >= 1")
        if self.max_epochs < 0:
            problems.append("max_epochs must be >= 0")
        if not 0.0 < self.validation_fraction < 1.0:
            problems.append("validation_fraction must lie in (0, 1)")
        if self.nlpd_val_samples < 1:
            problems.append("nlpd_val_samples must be >= 1")
        if problems:
            raise ValueError("; ".join(problems))
        # lam/p/k are validated by TransportConfig
        self.transport_config(1, 1)

    def transport_config(self, n: int, m: int) -> TransportConfig:
        return TransportConfig(
            lam=self.lam, p=self.p, k_neighbors=self.k_neighbors, n=n, m=m
        )


def replace_seed(cfg: TrainConfig, seed: int) -> TrainConfig:
    return dataclasses.replace(cfg, seed=seed)


@dataclass
class EpochRecord:
    epoch: int
    train_ot_cost: float
    val_nlpd: float
    wall_s: float
    lap_s: float
    build_s: float


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)
    best_epoch: int | None = None
    best_val_nlpd: float = float("nan")
    best_bandwidth: float = float("nan")
    val_indices: np.ndarray | None = None

    CSV_COLUMNS = ("epoch", "train_ot_cost", "val_nlpd", "wall_s", "lap_s", "build_s")

    def __len__(self) -> int:
        return len(self.records)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.CSV_COLUMNS)
            for r in self.records:
                writer.writerow(
                    [
                        r.epoch,
                        f"{r.train_ot_cost:.17g}",
                        f"{r.val_nlpd:.17g}",
                        f"{r.wall_s:.6f}",
                        f"{r.lap_s:.6f}",
                        f"{r.build_s:.6f}",
                    ]
                )


@dataclass
class Batch:
    """One training batch: repeated reals, matching fakes and their parent
    groups, plus the inputs and forward cache that produced the fakes."""

    reals: list
    fakes: list
    parent_of_fake: np.ndarray
    x: np.ndarray
    z: np.ndarray
    cache: dict


def make_batch(
    dataset: Dataset,
    batch_indices,
    sample_size: int,
    params: GeneratorParams,
    rng: np.random.Generator,
) -> Batch:
    """Assemble reals (each selected row repeated sample_size times) and one
    train-mode generator draw per repeated row at the same x."""
    batch_indices = np.asarray(batch_indices, dtype=np.int64)
    if batch_indices.size == 0:
        raise ValueError("batch must select at least one row")
    if sample_size < 1:
        raise ValueError("sample_size must be >= 1")
    xb = dataset.X[batch_indices]
    yb = dataset.Y[batch_indices]
    x_rep = np.repeat(xb, sample_size, axis=0)
    y_rep = np.repeat(yb, sample_size, axis=0)
    parent = np.repeat(np.arange(len(batch_indices), dtype=np.int64), sample_size)
    z = rng.standard_normal((len(x_rep), params.noise_dim))
    y_fake, cache = forward(params, x_rep, z, mode="train")
    reals = [LabeledSample(x, y) for x, y in zip(x_rep, y_rep)]
    fakes = [LabeledSample(x, y) for x, y in zip(x_rep, y_fake)]
    return Batch(reals=reals, fakes=fakes, parent_of_fake=parent, x=x_rep, z=z, cache=cache)


def _matched_cost_grad(batch: Batch, row_to_col: np.ndarray, cfg: TransportConfig) -> np.ndarray:
    """dLoss/dy per fake row for the mean matched unit cost under a fixed
    matching (real i -> fake row_to_col[i])."""
    N = len(batch.reals)
    Yr = np.stack([s.y for s in batch.reals])
    Yf = np.stack([s.y for s in batch.fakes])
    dy = Yf[row_to_col] - Yr
    wy = (1.0 - cfg.lam) / cfg.m
    if cfg.p == 1.0:
        g = wy * np.sign(dy)
    else:
        Xr = np.stack([s.x for s in batch.reals])
        Xf = np.stack([s.x for s in batch.fakes])
        dx = Xf[row_to_col] - Xr
        inner = (cfg.lam / cfg.n) * (np.abs(dx) ** cfg.p).sum(axis=1) + wy * (
            np.abs(dy) ** cfg.p
        ).sum(axis=1)
        scale = np.zeros(N)
        nz = inner > 0
        scale[nz] = inner[nz] ** (1.0 / cfg.p - 1.0)
        g = scale[:, None] * wy * np.abs(dy) ** (cfg.p - 1.0) * np.sign(dy)
    dl_dy = np.zeros_like(Yf)
    dl_dy[row_to_col] = g / N
    return dl_dy


def step(
    params: GeneratorParams,
    adam: AdamState,
    batch: Batch,
    cfg: TrainConfig,
) -> tuple[float, dict]:
    """One training step on a prepared batch.

    Builds the cost structure for cfg.mode, solves the assignment,
    backpropagates the matched-cost gradient and applies one Adam update
    (params and adam are updated in place). Returns the pre-step transport
    cost and the build/solve timings in seconds.
    """
    n = batch.reals[0].x.shape[0]
    m = batch.reals[0].y.shape[0]
    tcfg = cfg.transport_config(n, m)
    N = len(batch.reals)

    t0 = time.perf_counter()
    if cfg.mode == "dense":
        cost = build_dense_cost(batch.reals, batch.fakes, tcfg)
    else:
        cost = build_sparse_cost(
            batch.reals, batch.fakes, tcfg, batch.parent_of_fake, batch.parent_of_fake
        )
    t1 = time.perf_counter()
    try:
        assignment = solve_dense(cost) if cfg.mode == "dense" else solve_sparse(cost)
        t2 = time.perf_counter()
        build_s, lap_s = t1 - t0, t2 - t1
    except InfeasibleMatchingError:
        # unreachable when the sparsifier keeps the self-parent, but kept as
        # a defensive fallback so one bad batch cannot kill a long run
        log.warning("sparse matching infeasible; falling back to dense for this batch")
        t1b = time.perf_counter()
        dense_cost = build_dense_cost(batch.reals, batch.fakes, tcfg)
        t2 = time.perf_counter()
        assignment = solve_dense(dense_cost)
        build_s = (t1 - t0) + (t2 - t1b)
        lap_s = time.perf_counter() - t2

    ot_cost = assignment.total_cost / N
    dl_dy = _matched_cost_grad(batch, assignment.row_to_col, tcfg)
    grads = backward(params, batch.cache, dl_dy)
    adam_step(adam, params, grads)
    return ot_cost, {"build_s": build_s, "lap_s": lap_s}


def _epoch_batches(order: np.ndarray, batch_size: int):
    """Full batches only; the last partial batch of an epoch is dropped."""
    full = len(order) // batch_size
    for b in range(full):
        yield order[b * batch_size : (b + 1) * batch_size]


def train(
    dataset: Dataset,
    cfg: TrainConfig,
    val_indices: np.ndarray | None = None,
) -> tuple[GeneratorParams, TrainHistory]:
    """Train on a standardized dataset; returns the best-validation-NLPD
    snapshot and the per-epoch history.

    A validation split (cfg.validation_fraction of the rows, or the explicit
    val_indices) is held out for the per-epoch NLPD that drives early
    stopping: training stops once the NLPD has not improved for
    cfg.patience_epochs epochs, and the parameters of the best epoch are
    returned.
    """
    rng = np.random.default_rng(cfg.seed)
    rows = dataset.rows
    if val_indices is None:
        perm = rng.permutation(rows)
        n_val = max(1, int(round(cfg.validation_fraction * rows)))
        val_indices = np.sort(perm[:n_val])
    else:
        val_indices = np.sort(np.asarray(val_indices, dtype=np.int64))
    mask = np.ones(rows, dtype=bool)
    mask[val_indices] = False
    train_pool = np.flatnonzero(mask)
    if len(train_pool) < cfg.batch_size:
        raise ValueError(
            f"need at least batch_size={cfg.batch_size} training rows after the "
            f"validation split, got {len(train_pool)}"
        )
    val_set = dataset.subset(val_indices)

    params = GeneratorParams(
        dataset.n, dataset.m, noise_dim=cfg.noise_dim, hidden=cfg.hidden, rng=rng
    )
    adam = AdamState(params, learning_rate=cfg.learning_rate)
    history = TrainHistory(val_indices=val_indices)
    best_params = params.copy()
    best_nlpd = np.inf
    stale = 0

    for epoch in range(cfg.max_epochs):
        t_epoch = time.perf_counter()
        order = rng.permutation(train_pool)
        costs = []
        build_s = lap_s = 0.0
        for chunk in _epoch_batches(order, cfg.batch_size):
            batch = make_batch(dataset, chunk, cfg.sample_size, params, rng)
            cost, times = step(params, adam, batch, cfg)
            costs.append(cost)
            build_s += times["build_s"]
            lap_s += times["lap_s"]
        mean_cost = float(np.mean(costs)) if costs else float("nan")
        if costs and not np.isfinite(mean_cost):
            raise RuntimeError(
                f"non-finite training cost {mean_cost} at epoch {epoch}; "
                "inputs may not be standardized or the learning rate is too high"
            )
        samples = evaluation.generate_conditional_samples(
            params, val_set.X, cfg.nlpd_val_samples, rng
        )
        sigma, _, val_nlpd = evaluation._grid_search_bandwidth(
            samples, val_set.Y, cfg.bandwidth_grid, cfg.trim
        )
        wall_s = time.perf_counter() - t_epoch
        history.records.append(
            EpochRecord(
                epoch=epoch,
                train_ot_cost=mean_cost,
                val_nlpd=val_nlpd,
                wall_s=wall_s,
                lap_s=lap_s,
                build_s=build_s,
            )
        )
        if val_nlpd < best_nlpd:
            best_nlpd = val_nlpd
            best_params = params.copy()
            history.best_epoch = epoch
            history.best_val_nlpd = val_nlpd
            history.best_bandwidth = sigma
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience_epochs:
                break
    return best_params, history
