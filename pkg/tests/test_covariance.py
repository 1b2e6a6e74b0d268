import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.signal import lfilter

from latentgc.covariance import (
    MultiSeries,
    assemble_block_matrices,
    center,
    estimate_lagged_covariance,
    estimate_lagged_covariances,
    lag_covariance_set,
    regularize_condition_number,
)

from conftest import coloured_record


def test_multiseries_defaults_and_readonly():
    x = MultiSeries(np.zeros((3, 10)))
    assert x.labels == ("x1", "x2", "x3")
    assert (x.n_channels, x.n_samples) == (3, 10)
    with pytest.raises(ValueError):
        x.data[0, 0] = 1.0
    with pytest.raises(ValueError):
        MultiSeries(np.zeros((2, 5)), ("a",))
    with pytest.raises(ValueError):
        MultiSeries(np.zeros(5))


def test_valid_window_matches_direct_summation(rng):
    x = center(coloured_record(rng, D=3, T=200))
    L, T = 3, x.shape[1]
    for tau in range(L + 1):
        direct = sum(np.outer(x[:, t], x[:, t - tau]) for t in range(L, T)) / (T - L)
        if tau == 0:
            direct = 0.5 * (direct + direct.T)
        np.testing.assert_allclose(estimate_lagged_covariance(x, tau, L), direct, rtol=1e-12, atol=1e-14)


def test_full_window_is_zero_padded_gram(rng):
    x = center(coloured_record(rng, D=2, T=150))
    L, T = 2, x.shape[1]
    padded = np.hstack([np.zeros((2, L)), x])
    for tau in range(L + 1):
        direct = sum(np.outer(padded[:, t + L], padded[:, t + L - tau]) for t in range(T)) / T
        if tau == 0:
            direct = 0.5 * (direct + direct.T)
        np.testing.assert_allclose(estimate_lagged_covariance(x, tau, L, "full"), direct, rtol=1e-12, atol=1e-14)


def test_one_lag_copy_gives_unit_cross_covariance():
    rng = np.random.default_rng(0)
    e = rng.standard_normal(100_001)
    x = center(np.vstack([e[1:], e[:-1]]))  # x2(t) = x1(t-1)
    s1 = estimate_lagged_covariance(x, 1, 1)
    assert abs(s1[1, 0] - 1.0) < 0.05


def test_white_noise_lagged_covariance_vanishes():
    x = center(np.random.default_rng(1).standard_normal((3, 20_000)))
    assert np.abs(estimate_lagged_covariance(x, 1, 2)).max() < 5 / np.sqrt(20_000)


def test_standardized_unit_diagonal(rng):
    x = coloured_record(rng, D=3, T=3000)
    x = (x - x.mean(1, keepdims=True)) / x.std(1, keepdims=True)
    np.testing.assert_allclose(np.diag(estimate_lagged_covariance(x, 0, 3)), 1.0, atol=0.01)


def test_lag_errors():
    x = np.zeros((2, 10))
    with pytest.raises(ValueError):
        estimate_lagged_covariance(x, 4, 3)
    with pytest.raises(ValueError):
        estimate_lagged_covariance(x, 0, 9)
    with pytest.raises(ValueError):
        estimate_lagged_covariance(x, 0, 1, window="circular")


def test_block_matrices_small_cases():
    s = [np.array([[1.0]]), np.array([[0.5]]), np.array([[0.2]])]
    S, T = assemble_block_matrices(s)
    np.testing.assert_array_equal(T, [[1.0, 0.5], [0.5, 1.0]])
    np.testing.assert_array_equal(S, np.diag([0.5, 0.2]))
    a, b = np.eye(2), np.arange(4.0).reshape(2, 2)
    S1, T1 = assemble_block_matrices([a, b])
    np.testing.assert_array_equal(S1, b)
    np.testing.assert_array_equal(T1, a)
    with pytest.raises(ValueError):
        assemble_block_matrices([np.eye(2), np.eye(3)])


def test_toeplitz_block_layout(rng):
    sig = estimate_lagged_covariances(coloured_record(rng, D=3, T=300), 3)
    _, T = assemble_block_matrices(sig)
    D = 3
    for i in range(3):
        for j in range(3):
            k = j - i
            expect = sig[k] if k >= 0 else sig[-k].T
            np.testing.assert_array_equal(T[i * D:(i + 1) * D, j * D:(j + 1) * D], expect)


@settings(max_examples=40, deadline=None)
@given(D=st.integers(1, 5), L=st.integers(1, 4), seed=st.integers(0, 2**31 - 1))
def test_toeplitz_exactly_symmetric(D, L, seed):
    x = np.random.default_rng(seed).standard_normal((D, 40))
    _, T = assemble_block_matrices(estimate_lagged_covariances(center(x), L))
    np.testing.assert_array_equal(T, T.T)
    S2, T2 = assemble_block_matrices(estimate_lagged_covariances(center(x), L))
    np.testing.assert_array_equal(T, T2)


def test_sigma0_psd(rng):
    cov = lag_covariance_set(coloured_record(rng, D=5, T=80), 3)
    assert np.linalg.eigvalsh(cov.sigma[0]).min() > -1e-10


def test_regularize_examples():
    m, s = regularize_condition_number(np.eye(3), 10)
    assert s == 0 and np.array_equal(m, np.eye(3))
    m, s = regularize_condition_number(np.diag([10.0, 1.0]), 2)
    assert s == pytest.approx(8.0)
    np.testing.assert_allclose(m, np.diag([18.0, 9.0]))
    assert np.linalg.cond(m) == pytest.approx(2.0, rel=1e-6)
    a = np.random.default_rng(2).standard_normal((4, 4))
    m, s = regularize_condition_number(a, np.inf)
    assert s == 0 and m is a
    with pytest.raises(ValueError):
        regularize_condition_number(np.eye(2), 1.0)
    with pytest.raises(ValueError):
        regularize_condition_number(np.ones((2, 3)), 5)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), c=st.floats(1.5, 1e6))
def test_regularize_symmetric_hits_limit(seed, c):
    b = np.random.default_rng(seed).standard_normal((5, 3))
    m = b @ b.T  # rank deficient
    out, ridge = regularize_condition_number(m, c)
    lam = np.linalg.eigvalsh(out)
    assert lam.min() > 0
    assert lam.max() / lam.min() == pytest.approx(c, rel=1e-6)
    assert ridge > 0


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), c=st.floats(2.0, 1e4))
def test_regularize_nonsymmetric_bounded(seed, c):
    m = np.random.default_rng(seed).standard_normal((4, 4))
    out, _ = regularize_condition_number(m, c)
    assert np.linalg.cond(out) <= c * (1 + 1e-9)


def test_regularized_set_condition_numbers(rng):
    cov = lag_covariance_set(coloured_record(rng, D=4, T=100), 3, cond_limit=100.0)
    assert np.linalg.cond(cov.sigma_block_toeplitz) == pytest.approx(100.0, rel=1e-6)
    assert np.linalg.cond(cov.sigma_block_diag) <= 100.0 * (1 + 1e-9)


def test_reversed_matches_explicitly_reversed_data(rng):
    x = coloured_record(rng, D=3, T=400)
    cov = lag_covariance_set(x, 3, window="full")
    rev = lag_covariance_set(x[:, ::-1], 3, window="full")
    np.testing.assert_allclose(cov.reversed().sigma_block_toeplitz, rev.sigma_block_toeplitz, atol=1e-12)
    np.testing.assert_allclose(cov.reversed().sigma_block_diag, rev.sigma_block_diag, atol=1e-12)


def test_congruence_equals_transformed_data(rng):
    x = coloured_record(rng, D=4, T=300)
    W = rng.standard_normal((4, 2))
    a = lag_covariance_set(x, 2).congruence(W)
    b = lag_covariance_set(W.T @ x, 2)
    np.testing.assert_allclose(a.sigma_block_toeplitz, b.sigma_block_toeplitz, atol=1e-10)
    np.testing.assert_allclose(a.sigma_block_diag, b.sigma_block_diag, atol=1e-10)


def test_lag_stacks_agree_with_blocks(rng):
    cov = lag_covariance_set(coloured_record(rng, D=3, T=200), 3)
    toep = cov.toeplitz_lags()
    assert toep.shape == (5, 3, 3)
    np.testing.assert_array_equal(toep[2], cov.sigma0)
    np.testing.assert_allclose(toep[3], cov.sigma[1])
    np.testing.assert_allclose(toep[1], cov.sigma[1].T)
    np.testing.assert_allclose(cov.diag_lags(), np.stack(cov.sigma[1:]))


def test_estimator_consistency():
    # AR(1) with pole 0.5: Sigma(1) = 0.5 / (1 - 0.25)
    rng = np.random.default_rng(3)
    for T in (2000, 20000):
        e = rng.standard_normal(T + 200)
        x = lfilter([1.0], [1.0, -0.5], e)[200:][None, :]
        s1 = estimate_lagged_covariance(center(x), 1, 1)[0, 0]
        assert abs(s1 - 0.5 / 0.75) < 5 / np.sqrt(T)
