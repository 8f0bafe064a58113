"""Exact solvers for the linear assignment problem.

Both solvers run shortest-augmenting-path assignment with dual potentials
(Jonker-Volgenant style): the dense path through scipy's
``linear_sum_assignment`` and the sparse path through
``min_weight_full_bipartite_matching`` (LAPJVsp). A permutation-enumeration
brute-force solver is kept as an independent test oracle.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import min_weight_full_bipartite_matching

BRUTE_FORCE_MAX_N = 10

# scipy's sparse matching drops explicitly stored zeros, so stored costs are
# shifted by a constant before solving; a constant shift adds exactly
# n * shift to every perfect matching and leaves the argmin unchanged.
_SPARSE_SHIFT = 1.0


class InfeasibleMatchingError(ValueError):
    """No perfect matching exists within the stored sparse entries."""


@dataclass(frozen=True)
class CostMatrix:
    """Square matrix of non-negative, finite pairwise costs."""

    entries: np.ndarray

    def __post_init__(self):
        entries = np.ascontiguousarray(np.asarray(self.entries, dtype=np.float64))
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise ValueError(f"cost matrix must be square, got shape {entries.shape}")
        if entries.shape[0] == 0:
            raise ValueError("cost matrix must be non-empty")
        if not np.all(np.isfinite(entries)):
            raise ValueError("cost matrix entries must be finite")
        if np.any(entries < 0):
            raise ValueError("cost matrix entries must be non-negative")
        object.__setattr__(self, "entries", entries)

    @property
    def n(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class SparseCostMatrix:
    """Row-compressed square cost matrix storing only allowed pairings.

    Row i's entries live in ``data[indptr[i]:indptr[i+1]]`` with column
    indices ``indices[indptr[i]:indptr[i+1]]`` in strictly increasing order.
    """

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray

    def __post_init__(self):
        indptr = np.asarray(self.indptr, dtype=np.int64)
        indices = np.asarray(self.indices, dtype=np.int64)
        data = np.asarray(self.data, dtype=np.float64)
        if self.n <= 0:
            raise ValueError("matrix must be non-empty")
        if indptr.shape != (self.n + 1,) or indptr[0] != 0 or indptr[-1] != len(data):
            raise ValueError("malformed indptr")
        if len(indices) != len(data):
            raise ValueError("indices and data length mismatch")
        if np.any(np.diff(indptr) < 1):
            raise ValueError("every row must store at least one entry")
        if len(indices) and (indices.min() < 0 or indices.max() >= self.n):
            raise ValueError("column index out of range")
        for i in range(self.n):
            cols = indices[indptr[i] : indptr[i + 1]]
            if np.any(np.diff(cols) <= 0):
                raise ValueError(f"row {i} columns must be strictly increasing")
        if not np.all(np.isfinite(data)):
            raise ValueError("costs must be finite")
        if np.any(data < 0):
            raise ValueError("costs must be non-negative")
        object.__setattr__(self, "indptr", indptr)
        object.__setattr__(self, "indices", indices)
        object.__setattr__(self, "data", data)

    @classmethod
    def from_rows(cls, n: int, rows: list[list[tuple[int, float]]]) -> "SparseCostMatrix":
        """Build from per-row lists of (column, cost) pairs."""
        if len(rows) != n:
            raise ValueError("need one entry list per row")
        indptr = np.zeros(n + 1, dtype=np.int64)
        indices, data = [], []
        for i, row in enumerate(rows):
            row = sorted(row)
            indices.extend(c for c, _ in row)
            data.extend(v for _, v in row)
            indptr[i + 1] = indptr[i] + len(row)
        return cls(n, indptr, np.array(indices, dtype=np.int64), np.array(data))

    @classmethod
    def from_dense(cls, cost: CostMatrix) -> "SparseCostMatrix":
        """Fully dense sparsity pattern over an existing cost matrix."""
        n = cost.n
        indptr = np.arange(n + 1, dtype=np.int64) * n
        indices = np.tile(np.arange(n, dtype=np.int64), n)
        return cls(n, indptr, indices, cost.entries.ravel().copy())

    def row_entries(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return self.indices[lo:hi], self.data[lo:hi]

    @property
    def nnz(self) -> int:
        return len(self.data)


@dataclass(frozen=True)
class Assignment:
    """A perfect matching: row i is assigned to column row_to_col[i]."""

    row_to_col: np.ndarray
    total_cost: float

    def __post_init__(self):
        cols = np.asarray(self.row_to_col, dtype=np.int64)
        n = len(cols)
        if n == 0 or not np.array_equal(np.sort(cols), np.arange(n)):
            raise ValueError("row_to_col must be a permutation")
        object.__setattr__(self, "row_to_col", cols)


def solve_dense(cost: CostMatrix) -> Assignment:
    """Minimum-cost perfect matching on a dense cost matrix."""
    if not isinstance(cost, CostMatrix):
        cost = CostMatrix(np.asarray(cost))
    rows, cols = linear_sum_assignment(cost.entries)
    total = float(cost.entries[rows, cols].sum())
    return Assignment(row_to_col=cols, total_cost=total)


def solve_sparse(cost: SparseCostMatrix) -> Assignment:
    """Minimum-cost perfect matching restricted to the stored entries.

    Raises InfeasibleMatchingError when the stored entries admit no perfect
    matching, so callers can fall back to a denser pattern.
    """
    mat = csr_matrix(
        (cost.data + _SPARSE_SHIFT, cost.indices, cost.indptr),
        shape=(cost.n, cost.n),
    )
    try:
        rows, cols = min_weight_full_bipartite_matching(mat)
    except ValueError as exc:
        raise InfeasibleMatchingError(
            f"no perfect matching within the stored sparsity pattern: {exc}"
        ) from exc
    row_to_col = np.empty(cost.n, dtype=np.int64)
    row_to_col[rows] = cols
    total = 0.0
    for i in range(cost.n):
        idx, vals = cost.row_entries(i)
        total += vals[np.searchsorted(idx, row_to_col[i])]
    return Assignment(row_to_col=row_to_col, total_cost=float(total))


def _permutations_array(n: int) -> np.ndarray:
    return np.array(list(itertools.permutations(range(n))), dtype=np.int64)


def brute_force(cost: CostMatrix) -> Assignment:
    """Exhaustive minimum over all permutations; ties broken by the
    lexicographically smallest permutation. Test oracle, n <= 10 only."""
    if not isinstance(cost, CostMatrix):
        cost = CostMatrix(np.asarray(cost))
    n = cost.n
    if n > BRUTE_FORCE_MAX_N:
        raise ValueError(f"brute force limited to n <= {BRUTE_FORCE_MAX_N}, got {n}")
    perms = _permutations_array(n)
    totals = cost.entries[np.arange(n), perms].sum(axis=1)
    # permutations() yields in lexicographic order and argmin keeps the first
    # minimum, which is the required tie-break
    best = int(np.argmin(totals))
    return Assignment(row_to_col=perms[best].copy(), total_cost=float(totals[best]))
