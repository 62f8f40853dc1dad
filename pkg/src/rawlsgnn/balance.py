"""Sinkhorn-Knopp balancing of a non-negative square matrix into doubly stochastic form.

The iteration alternates reciprocal column and row rescalings,

    c_{k+1} = 1 / (M^T r_k),    r_{k+1} = 1 / (M c_{k+1}),

starting from all-ones vectors, and stops once every row and column sum of
``diag(r) M diag(c)`` is within tolerance of 1. Each pass costs two sparse
matrix-vector products plus O(n) reciprocals; the balanced matrix is
materialized once at exit by rescaling the stored values in place of the
pattern, so the whole run needs O(m + n) extra space.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import SparseMatrix, degrees

__all__ = [
    "BalanceConfig",
    "BalanceResult",
    "DegenerateMatrixError",
    "NonConvergenceError",
    "sinkhorn_knopp",
    "has_support_diag",
]


class DegenerateMatrixError(ValueError):
    """The matrix has an all-zero row or column and cannot be balanced."""


class NonConvergenceError(RuntimeError):
    """Balancing did not reach tolerance within the iteration budget.

    Signals missing total support in the input; carries the iteration count
    and the worst row/column sum deviation observed at exit.
    """

    def __init__(self, iterations: int, max_deviation: float):
        self.iterations = iterations
        self.max_deviation = max_deviation
        super().__init__(
            f"no convergence after {iterations} iterations "
            f"(max |sum - 1| = {max_deviation:.3e}); "
            "the input likely lacks total support"
        )


@dataclass(frozen=True)
class BalanceConfig:
    tolerance: float = 1e-8
    max_iterations: int = 10_000

    def __post_init__(self) -> None:
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclass(frozen=True)
class BalanceResult:
    """Balanced matrix plus the diagonal scale vectors that produced it.

    ``matrix`` equals the input with entry (i, j) multiplied by
    ``row_scale[i] * col_scale[j]``; the sparsity pattern is unchanged.
    """

    matrix: SparseMatrix
    row_scale: np.ndarray = field(repr=False)
    col_scale: np.ndarray = field(repr=False)
    iterations: int
    max_deviation: float


def has_support_diag(M: SparseMatrix) -> bool:
    """True when every main-diagonal entry is strictly positive.

    A positive main diagonal is a sufficient condition for the matrix to
    have support (the identity permutation is then a positive diagonal);
    self-loop-augmented propagation matrices always satisfy it.
    """
    if M.n_rows != M.n_cols:
        raise ValueError("support check requires a square matrix")
    if M.n_rows == 0:
        return True
    return bool(np.all(M.diagonal() > 0))


def sinkhorn_knopp(M: SparseMatrix, config: BalanceConfig | None = None) -> BalanceResult:
    """Balance ``M`` so every row and column sums to 1 within tolerance.

    Parameters
    ----------
    M : SparseMatrix
        Square, non-negative, with no all-zero row or column.
    config : BalanceConfig, optional
        Stopping tolerance on ``max |row or column sum - 1|`` and the
        iteration cap.

    Returns
    -------
    BalanceResult
        Balanced matrix, final scale vectors, iterations used, and the
        deviation at exit.

    Raises
    ------
    DegenerateMatrixError
        If some row or column of ``M`` is entirely zero.
    NonConvergenceError
        If the tolerance is not reached within ``max_iterations``; for
        matrices with total support (e.g. anything with a positive main
        diagonal) this cannot happen with a sufficient budget.
    """
    if config is None:
        config = BalanceConfig()
    if M.n_rows != M.n_cols:
        raise ValueError("balancing requires a square matrix")
    if M.n_rows == 0:
        empty = np.ones(0)
        return BalanceResult(M, empty, empty, iterations=0, max_deviation=0.0)
    row_sums = degrees(M, "row")
    col_sums = degrees(M, "column")
    for label, sums in (("row", row_sums), ("column", col_sums)):
        if np.any(sums == 0):
            index = int(np.nonzero(sums == 0)[0][0])
            raise DegenerateMatrixError(f"{label} {index} of the matrix sums to zero")

    csr = M._scipy()
    csc = csr.T  # lazy transpose view, no value copy
    n = M.n_rows
    r = np.ones(n)
    c = np.ones(n)
    transpose_prod = csc @ r
    deviation = np.inf
    for iteration in range(1, config.max_iterations + 1):
        c = 1.0 / transpose_prod
        forward_prod = csr @ c
        r = 1.0 / forward_prod
        transpose_prod = csc @ r  # reused by the next pass
        # row sums of diag(r) M diag(c) are exact 1s by construction of r;
        # include them anyway so the reported deviation is honest
        deviation = max(
            float(np.max(np.abs(r * forward_prod - 1.0))),
            float(np.max(np.abs(c * transpose_prod - 1.0))),
        )
        if deviation <= config.tolerance:
            balanced = M.with_values(M.values * r[M.row_ids()] * c[M.col_indices])
            return BalanceResult(
                matrix=balanced,
                row_scale=r,
                col_scale=c,
                iterations=iteration,
                max_deviation=deviation,
            )
    raise NonConvergenceError(config.max_iterations, deviation)
