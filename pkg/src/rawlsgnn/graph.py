"""Sparse CSR matrices and the propagation-matrix normalizations used for GCN training.

The adjacency matrix, its renormalized Laplacian, and every normalization
variant (row / column / symmetric / doubly stochastic) share one immutable
CSR container. Normalizing never changes the sparsity pattern, only the
stored values.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Literal

import numpy as np
from scipy import sparse

if TYPE_CHECKING:
    from .balance import BalanceConfig

__all__ = [
    "SparseMatrix",
    "NormalizationVariant",
    "from_edge_list",
    "read_edge_list",
    "add_self_loops",
    "renormalized_laplacian",
    "normalize",
    "degrees",
    "spmm",
    "spmm_transpose",
    "is_symmetric",
]

NormalizationVariant = Literal["row", "column", "symmetric", "doubly_stochastic"]

NORMALIZATION_VARIANTS = ("row", "column", "symmetric", "doubly_stochastic")


@dataclass(frozen=True)
class SparseMatrix:
    """Immutable non-negative matrix in canonical CSR form.

    Attributes
    ----------
    n_rows, n_cols : int
        Matrix shape.
    row_offsets : (n_rows+1,) int64 array
        Non-decreasing offsets into ``col_indices``/``values``; first entry 0,
        last entry equals the number of stored values.
    col_indices : (nnz,) int64 array
        Column of each stored value, strictly increasing within a row.
    values : (nnz,) float64 array
        Stored entries; all finite and >= 0.
    """

    n_rows: int
    n_cols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        offsets = np.ascontiguousarray(self.row_offsets, dtype=np.int64)
        cols = np.ascontiguousarray(self.col_indices, dtype=np.int64)
        vals = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.n_rows < 0 or self.n_cols < 0:
            raise ValueError("matrix shape must be non-negative")
        if offsets.shape != (self.n_rows + 1,):
            raise ValueError("row_offsets must have length n_rows + 1")
        if offsets[0] != 0 or offsets[-1] != len(vals) or np.any(np.diff(offsets) < 0):
            raise ValueError("row_offsets must be non-decreasing from 0 to nnz")
        if len(cols) != len(vals):
            raise ValueError("col_indices and values must have equal length")
        if len(cols) and (cols.min() < 0 or cols.max() >= self.n_cols):
            raise ValueError("column index out of range")
        # canonical CSR: strictly increasing columns within each row; the
        # decrease test may only pass at a row boundary
        if len(cols) > 1:
            non_increasing = np.diff(cols) <= 0
            boundary = np.zeros(len(cols) - 1, dtype=bool)
            starts = offsets[1:-1]
            starts = starts[(starts > 0) & (starts < len(cols))]
            boundary[starts - 1] = True
            if np.any(non_increasing & ~boundary):
                raise ValueError("col_indices must be strictly increasing within each row")
        if not np.all(np.isfinite(vals)):
            raise ValueError("values must be finite")
        if len(vals) and vals.min() < 0:
            raise ValueError("values must be non-negative")
        for arr in (offsets, cols, vals):
            arr.flags.writeable = False
        object.__setattr__(self, "row_offsets", offsets)
        object.__setattr__(self, "col_indices", cols)
        object.__setattr__(self, "values", vals)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self) -> int:
        return len(self.values)

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """Column indices and values of row ``i`` (views, do not mutate)."""
        lo, hi = self.row_offsets[i], self.row_offsets[i + 1]
        return self.col_indices[lo:hi], self.values[lo:hi]

    def row_ids(self) -> np.ndarray:
        """Row index of every stored entry, in storage order."""
        return np.repeat(
            np.arange(self.n_rows, dtype=np.int64), np.diff(self.row_offsets)
        )

    def diagonal(self) -> np.ndarray:
        """Dense main diagonal (only meaningful for square matrices)."""
        return self._scipy().diagonal()

    def with_values(self, values: np.ndarray) -> SparseMatrix:
        """Same sparsity pattern, new values."""
        return SparseMatrix(
            self.n_rows, self.n_cols, self.row_offsets, self.col_indices, values
        )

    def to_dense(self) -> np.ndarray:
        dense = np.zeros((self.n_rows, self.n_cols))
        dense[self.row_ids(), self.col_indices] = self.values
        return dense

    def _scipy(self) -> sparse.csr_matrix:
        return sparse.csr_matrix(
            (self.values, self.col_indices, self.row_offsets),
            shape=(self.n_rows, self.n_cols),
        )

    @classmethod
    def from_coo(
        cls,
        rows: np.ndarray,
        cols: np.ndarray,
        values: np.ndarray,
        n_rows: int,
        n_cols: int,
        *,
        sum_duplicates: bool = True,
    ) -> SparseMatrix:
        """Build canonical CSR from coordinate triplets.

        Duplicate coordinates are summed when ``sum_duplicates`` is true and
        collapsed to their first value otherwise.
        """
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64)
        if len(rows):
            if rows.min() < 0 or rows.max() >= n_rows:
                raise ValueError("row index out of range")
            if cols.min() < 0 or cols.max() >= n_cols:
                raise ValueError("column index out of range")
        keys = rows * n_cols + cols
        unique_keys, first_pos = np.unique(keys, return_index=True)
        if sum_duplicates:
            merged = np.bincount(
                np.searchsorted(unique_keys, keys), weights=values,
                minlength=len(unique_keys),
            )
        else:
            merged = values[first_pos]
        out_rows = unique_keys // n_cols
        out_cols = unique_keys % n_cols
        offsets = np.zeros(n_rows + 1, dtype=np.int64)
        np.cumsum(np.bincount(out_rows, minlength=n_rows), out=offsets[1:])
        return cls(n_rows, n_cols, offsets, out_cols, merged)

    @classmethod
    def from_dense(cls, dense: np.ndarray) -> SparseMatrix:
        """CSR from a dense array, keeping exact nonzeros."""
        dense = np.asarray(dense, dtype=np.float64)
        rows, cols = np.nonzero(dense)
        return cls.from_coo(rows, cols, dense[rows, cols], *dense.shape)

    @classmethod
    def eye(cls, n: int) -> SparseMatrix:
        offsets = np.arange(n + 1, dtype=np.int64)
        return cls(n, n, offsets, np.arange(n, dtype=np.int64), np.ones(n))


def from_edge_list(
    edges: Iterable[tuple[int, int]], n: int, symmetrize: bool = True
) -> SparseMatrix:
    """Unit-weight adjacency matrix from an edge list.

    Duplicate edges collapse to a single entry of weight 1; with
    ``symmetrize`` both orientations of every edge are stored, making the
    output exactly symmetric.
    """
    edge_arr = np.array(list(edges), dtype=np.int64).reshape(-1, 2)
    if len(edge_arr) and (edge_arr.min() < 0 or edge_arr.max() >= n):
        raise ValueError(f"edge endpoint out of range for n={n}")
    rows, cols = edge_arr[:, 0], edge_arr[:, 1]
    if symmetrize:
        rows, cols = np.concatenate([rows, cols]), np.concatenate([cols, rows])
    return SparseMatrix.from_coo(
        rows, cols, np.ones(len(rows)), n, n, sum_duplicates=False
    )


def read_edge_list(path: str | Path) -> list[tuple[int, int]]:
    """Parse an edge-list file: one ``src<TAB>dst`` pair per line, ``#`` comments."""
    edges: list[tuple[int, int]] = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            parts = text.split("\t")
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'src<TAB>dst', got {line!r}")
            edges.append((int(parts[0]), int(parts[1])))
    return edges


def add_self_loops(A: SparseMatrix) -> SparseMatrix:
    """A + I; existing diagonal entries gain 1."""
    if A.n_rows != A.n_cols:
        raise ValueError("self loops require a square matrix")
    diag = np.arange(A.n_rows, dtype=np.int64)
    return SparseMatrix.from_coo(
        np.concatenate([A.row_ids(), diag]),
        np.concatenate([A.col_indices, diag]),
        np.concatenate([A.values, np.ones(A.n_rows)]),
        A.n_rows,
        A.n_cols,
    )


def degrees(M: SparseMatrix, axis: Literal["row", "column"] = "row") -> np.ndarray:
    """Per-node weighted degree: sum of each row (or column) of ``M``."""
    if axis == "row":
        return np.bincount(M.row_ids(), weights=M.values, minlength=M.n_rows)
    if axis == "column":
        return np.bincount(M.col_indices, weights=M.values, minlength=M.n_cols)
    raise ValueError(f"unknown axis {axis!r}")


def _symmetric_scale(M: SparseMatrix) -> SparseMatrix:
    d = degrees(M, "row")
    if np.any(d <= 0):
        raise ValueError("symmetric scaling requires strictly positive row sums")
    inv_sqrt = 1.0 / np.sqrt(d)
    scaled = M.values * inv_sqrt[M.row_ids()] * inv_sqrt[M.col_indices]
    return M.with_values(scaled)


def renormalized_laplacian(A: SparseMatrix) -> SparseMatrix:
    """Self-loop-augmented symmetric normalization of an adjacency matrix.

    Returns the matrix with entries ``(A + I)[i, j] / sqrt(d_i * d_j)`` where
    ``d`` holds the row sums of ``A + I``. The output is bitwise symmetric
    (the scaling ``d_i * d_j`` commutes) and has a strictly positive diagonal.
    """
    if A.n_rows != A.n_cols:
        raise ValueError("adjacency matrix must be square")
    if not is_symmetric(A):
        raise ValueError("adjacency matrix must be symmetric")
    return _symmetric_scale(add_self_loops(A))


def normalize(
    M: SparseMatrix,
    variant: NormalizationVariant,
    balance: BalanceConfig | None = None,
) -> SparseMatrix:
    """Rescale the nonzeros of ``M`` so the chosen sums are 1.

    Parameters
    ----------
    M : SparseMatrix
        For ``row``/``column``/``symmetric`` pass the self-loop-augmented
        adjacency ``A + I``; for ``doubly_stochastic`` pass the renormalized
        Laplacian, which is then balanced iteratively.
    variant : {"row", "column", "symmetric", "doubly_stochastic"}
    balance : BalanceConfig, optional
        Tolerance / iteration cap for the doubly-stochastic variant.

    The output always has the sparsity pattern of ``M``.
    """
    from .balance import DegenerateMatrixError, sinkhorn_knopp

    if variant == "symmetric":
        return _symmetric_scale(M)
    if variant in ("row", "column"):
        d = degrees(M, variant)
        if np.any(d <= 0):
            raise DegenerateMatrixError(f"zero {variant} sum; cannot {variant}-normalize")
        if variant == "row":
            return M.with_values(M.values / d[M.row_ids()])
        return M.with_values(M.values / d[M.col_indices])
    if variant == "doubly_stochastic":
        return sinkhorn_knopp(M, balance).matrix
    raise ValueError(f"unknown normalization variant {variant!r}")


def spmm(M: SparseMatrix, X: np.ndarray) -> np.ndarray:
    """Sparse-dense product ``M @ X``."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != M.n_cols:
        raise ValueError(f"cannot multiply {M.shape} by {X.shape}")
    return M._scipy() @ X


def spmm_transpose(M: SparseMatrix, X: np.ndarray) -> np.ndarray:
    """``M.T @ X`` without materializing the transpose."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != M.n_rows:
        raise ValueError(f"cannot multiply transpose of {M.shape} by {X.shape}")
    return M._scipy().T @ X


def is_symmetric(M: SparseMatrix, tol: float = 0.0) -> bool:
    """True when ``M`` equals its transpose within ``tol`` (absolute, entrywise)."""
    if M.n_rows != M.n_cols:
        return False
    diff = M._scipy() - M._scipy().T
    return bool(len(diff.data) == 0 or np.max(np.abs(diff.data)) <= tol)
