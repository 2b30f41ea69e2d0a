import numpy as np
import pytest

from dagforge.gp_kernel import (
    GpConfig,
    NotPositiveDefiniteError,
    cholesky_solve,
    gp_fit,
    gp_sample_function,
    gp_ssr,
    rbf_kernel,
)
from dagforge.scoring import Dataset, ssr


def test_rbf_examples():
    a = np.array([[0.0, 0.0]])
    assert rbf_kernel(a, a, 1.0)[0, 0] == 1.0
    b = np.array([[1.0, 1.0]])
    assert rbf_kernel(a, b, 1.0)[0, 0] == pytest.approx(np.exp(-1.0))
    far = rbf_kernel(np.random.default_rng(0).standard_normal((4, 2)), b, 1e8)
    np.testing.assert_allclose(far, 1.0, atol=1e-12)


def test_rbf_symmetric_psd():
    rng = np.random.default_rng(1)
    for _ in range(20):
        a = rng.standard_normal((20, 3))
        K = rbf_kernel(a, a, float(rng.uniform(0.1, 5)))
        assert np.abs(K - K.T).max() <= 1e-12
        assert np.linalg.eigvalsh(K).min() >= -1e-8


def test_rbf_shape_mismatch():
    with pytest.raises(ValueError):
        rbf_kernel(np.zeros((2, 2)), np.zeros((2, 3)), 1.0)


def test_cholesky_solve_examples():
    r = np.array([1.0, -2.0, 3.0])
    np.testing.assert_allclose(cholesky_solve(np.eye(3), r), r, rtol=1e-8)
    np.testing.assert_allclose(cholesky_solve(np.array([[4.0]]), np.array([2.0])), [0.5], rtol=1e-8)


def test_cholesky_solve_residual():
    rng = np.random.default_rng(2)
    M = rng.standard_normal((5, 5))
    spd = M @ M.T + 0.1 * np.eye(5)
    rhs = rng.standard_normal((5, 2))
    X = cholesky_solve(spd, rhs, jitter=1e-9)
    res = (spd + 1e-9 * np.eye(5)) @ X - rhs
    assert np.linalg.norm(res) / np.linalg.norm(rhs) <= 1e-8
    assert np.linalg.norm(spd @ X - rhs) / np.linalg.norm(rhs) <= 1e-8


def test_cholesky_escalates_then_fails():
    singular = np.ones((3, 3))
    X = cholesky_solve(singular, np.ones(3))
    assert np.all(np.isfinite(X))
    with pytest.raises(NotPositiveDefiniteError):
        cholesky_solve(-np.eye(3), np.ones(3))


def test_gp_ssr_constant_target():
    rng = np.random.default_rng(3)
    n = 40
    data = Dataset(np.column_stack([rng.standard_normal(n), np.full(n, 2.5)]))
    assert gp_ssr(data, 1, [0]) <= 1e-6 * n


def test_gp_beats_ols_on_sine():
    x = np.linspace(-3, 3, 50)
    data = Dataset(np.column_stack([x, np.sin(x)]))
    cfg = GpConfig(alpha=1.0, length_scale_grid=(0.5, 1.0, 2.0))
    assert gp_ssr(data, 1, [0], cfg) < ssr(data, 1, [0])


def test_gp_ssr_permutation_invariant_and_reproducible():
    rng = np.random.default_rng(4)
    x = rng.uniform(-2, 2, (30, 2))
    y = np.sin(x[:, 0]) + x[:, 1] ** 2 + 0.1 * rng.standard_normal(30)
    data = Dataset(np.column_stack([x, y]))
    perm = rng.permutation(30)
    base = gp_ssr(data, 2, [0, 1])
    assert gp_ssr(Dataset(data.x[perm]), 2, [0, 1]) == pytest.approx(base, abs=1e-10)
    assert gp_ssr(data, 2, [0, 1]) == base


def test_gp_ssr_empty_parents_is_centred_variance():
    data = Dataset(np.array([[1.0], [-1.0], [1.0], [-1.0]]))
    assert gp_ssr(data, 0, []) == pytest.approx(4.0)


def test_length_scale_ties_prefer_smoother():
    # Constant target: every length scale has identical marginal likelihood.
    X = np.linspace(0, 1, 10)[:, None]
    _, ls, _ = gp_fit(X, np.zeros(10), GpConfig(length_scale_grid=(0.5, 2.0, 1.0)))
    assert ls == 2.0


def test_length_scale_is_grid_argmax():
    rng = np.random.default_rng(6)
    X = rng.uniform(-3, 3, (40, 1))
    y = np.sin(3 * X[:, 0])
    grid = (0.1, 0.3, 1.0, 3.0, 10.0)
    _, chosen, lml = gp_fit(X, y, GpConfig(alpha=0.01, length_scale_grid=grid))
    for ls in grid:
        _, _, other = gp_fit(X, y, GpConfig(alpha=0.01, length_scale_grid=(ls,)))
        assert other <= lml
    assert chosen < 3.0


def test_gp_config_validation():
    with pytest.raises(ValueError):
        GpConfig(alpha=-1)
    with pytest.raises(ValueError):
        GpConfig(length_scale_grid=())


def test_gp_sample_single_and_deterministic():
    f = gp_sample_function(np.zeros((1, 1)), 1.0, np.random.default_rng(0))
    assert f.shape == (1,)
    X = np.random.default_rng(1).standard_normal((25, 2))
    a = gp_sample_function(X, 1.0, np.random.default_rng(7))
    b = gp_sample_function(X, 1.0, np.random.default_rng(7))
    assert np.array_equal(a, b)


def test_gp_sample_unit_variance():
    rng = np.random.default_rng(8)
    X = np.array([[0.0], [0.5], [3.0]])
    draws = np.array([gp_sample_function(X, 1.0, rng) for _ in range(1000)])
    np.testing.assert_allclose(draws.var(axis=0), 1.0, atol=0.15)
