import numpy as np
import pytest

from rawlsgnn.balance import (
    BalanceConfig,
    DegenerateMatrixError,
    NonConvergenceError,
    has_support_diag,
    sinkhorn_knopp,
)
from rawlsgnn.graph import SparseMatrix, from_edge_list, renormalized_laplacian


def dense_balance_oracle(dense, tol=1e-12, max_iter=100_000):
    """Reference fixed-point iteration on a dense copy."""
    n = dense.shape[0]
    r = np.ones(n)
    c = np.ones(n)
    for _ in range(max_iter):
        c = 1.0 / (dense.T @ r)
        r = 1.0 / (dense @ c)
        P = r[:, None] * dense * c[None, :]
        dev = max(np.abs(P.sum(axis=0) - 1).max(), np.abs(P.sum(axis=1) - 1).max())
        if dev <= tol:
            return P
    raise AssertionError("oracle failed to converge")


def path_laplacian(n=3):
    return renormalized_laplacian(from_edge_list([(i, i + 1) for i in range(n - 1)], n))


def test_identity_balances_in_one_iteration():
    result = sinkhorn_knopp(SparseMatrix.eye(5))
    assert result.iterations == 1
    assert result.max_deviation == 0.0
    assert np.array_equal(result.matrix.to_dense(), np.eye(5))


def test_all_ones_two_by_two():
    M = SparseMatrix.from_dense(np.ones((2, 2)))
    result = sinkhorn_knopp(M)
    np.testing.assert_allclose(result.matrix.to_dense(), np.full((2, 2), 0.5), atol=1e-12)


def test_path_laplacian_matches_dense_oracle():
    L = path_laplacian()
    result = sinkhorn_knopp(L, BalanceConfig(tolerance=1e-8))
    expected = dense_balance_oracle(L.to_dense())
    np.testing.assert_allclose(result.matrix.to_dense(), expected, atol=1e-7)
    dense = result.matrix.to_dense()
    assert np.abs(dense.sum(axis=0) - 1).max() <= 1e-8
    assert np.abs(dense.sum(axis=1) - 1).max() <= 1e-8


def test_pattern_preserved():
    L = path_laplacian(6)
    result = sinkhorn_knopp(L)
    assert np.array_equal(result.matrix.row_offsets, L.row_offsets)
    assert np.array_equal(result.matrix.col_indices, L.col_indices)


def test_scale_recovery():
    L = path_laplacian(5)
    result = sinkhorn_knopp(L)
    rebuilt = (
        L.values * result.row_scale[L.row_ids()] * result.col_scale[L.col_indices]
    )
    np.testing.assert_allclose(rebuilt, result.matrix.values, rtol=0, atol=1e-14)


def test_balanced_laplacian_is_symmetric():
    rng = np.random.default_rng(7)
    for seed in range(4):
        mask = np.triu(np.random.default_rng(seed).random((15, 15)) < 0.3, k=1)
        A = SparseMatrix.from_dense((mask | mask.T).astype(float))
        P = sinkhorn_knopp(renormalized_laplacian(A)).matrix.to_dense()
        assert np.abs(P - P.T).max() < 1e-6


def test_uniqueness_across_iteration_budgets():
    L = path_laplacian(7)
    cfg_a = BalanceConfig(tolerance=1e-9, max_iterations=10_000)
    cfg_b = BalanceConfig(tolerance=1e-9, max_iterations=117)
    P_a = sinkhorn_knopp(L, cfg_a).matrix.to_dense()
    P_b = sinkhorn_knopp(L, cfg_b).matrix.to_dense()
    assert np.abs(P_a - P_b).max() <= 10 * 1e-9


def test_reported_deviation_is_honest():
    L = path_laplacian(9)
    result = sinkhorn_knopp(L, BalanceConfig(tolerance=1e-10))
    dense = result.matrix.to_dense()
    true_dev = max(
        np.abs(dense.sum(axis=0) - 1).max(), np.abs(dense.sum(axis=1) - 1).max()
    )
    assert result.max_deviation <= 1e-10
    assert true_dev == pytest.approx(result.max_deviation, abs=1e-12)


def test_zero_row_raises_degenerate():
    M = SparseMatrix.from_dense(np.array([[1.0, 1.0], [0.0, 0.0]]))
    with pytest.raises(DegenerateMatrixError):
        sinkhorn_knopp(M)


def test_zero_column_raises_degenerate():
    M = SparseMatrix.from_dense(np.array([[1.0, 0.0], [1.0, 0.0]]))
    with pytest.raises(DegenerateMatrixError):
        sinkhorn_knopp(M)


def test_non_convergence_raises_with_report():
    # support but no total support: the (0,1) entry lies on no positive
    # diagonal, so the scales diverge instead of converging
    M = SparseMatrix.from_dense(np.array([[1.0, 1.0], [1.0, 0.0]]))
    with pytest.raises(NonConvergenceError) as excinfo:
        sinkhorn_knopp(M, BalanceConfig(tolerance=1e-12, max_iterations=50))
    assert excinfo.value.iterations == 50
    assert excinfo.value.max_deviation > 0


def test_rectangular_rejected():
    M = SparseMatrix.from_dense(np.ones((2, 3)))
    with pytest.raises(ValueError):
        sinkhorn_knopp(M)


def test_has_support_diag():
    assert has_support_diag(SparseMatrix.eye(3))
    assert not has_support_diag(from_edge_list([], n=2))
    assert not has_support_diag(from_edge_list([(0, 1)], n=2))
    A = from_edge_list([(0, 1), (1, 2)], n=3)
    assert has_support_diag(renormalized_laplacian(A))


def test_config_validation():
    with pytest.raises(ValueError):
        BalanceConfig(tolerance=0.0)
    with pytest.raises(ValueError):
        BalanceConfig(max_iterations=0)


def test_per_iteration_time_scales_roughly_linearly():
    # doubling the edge count should roughly double per-iteration cost
    import time

    from rawlsgnn.data import synthetic_powerlaw

    def per_iter_seconds(m_attach, repeats=5):
        ds = synthetic_powerlaw(
            n=5000, m_attach=m_attach, num_classes=3, feature_dim=4,
            homophily=0.8, seed=1,
        )
        L = renormalized_laplacian(ds.A)
        best = np.inf
        for _ in range(repeats):
            start = time.perf_counter()
            result = sinkhorn_knopp(L, BalanceConfig(tolerance=1e-8))
            best = min(best, (time.perf_counter() - start) / result.iterations)
        return best

    t_small = per_iter_seconds(3)
    t_large = per_iter_seconds(6)  # ~2x the edges
    assert 1.3 <= t_large / t_small <= 3.0
