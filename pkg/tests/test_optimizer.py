import warnings

import numpy as np
import pytest

from latentgc.causality import ProjectionPair, latent_stats
from latentgc.covariance import MultiSeries, center, lag_covariance_set
from latentgc.deflation import removal_basis
from latentgc.gradient import combined_gradient
from latentgc.optimizer import (
    ConvergenceTrace,
    Decomposition,
    OptimizationWarning,
    OptimizerConfig,
    PairResult,
    compute_forward_model,
    decompose,
    match_components,
    optimize_pair,
    whitening_transform,
)
from latentgc.simulator import VarSystem, simulate_var


def two_source(seed=0, T=4000):
    # s1 drives s2 at lag 1
    A1 = np.array([[0.5, 0.0], [0.8, 0.2]])
    return simulate_var(VarSystem(A1[None]), T, seed=seed)


@pytest.fixture(scope="module")
def chain_record():
    # three sources, s1 -> s2 -> s3, mixed into four channels
    A1 = np.array([[0.6, 0.0, 0.0], [0.7, 0.3, 0.0], [0.0, 0.7, -0.3]])
    s = simulate_var(VarSystem(A1[None]), 3000, seed=11)
    A = np.random.default_rng(12).uniform(size=(4, 3))
    return MultiSeries(A @ s.data), s, A


def test_config_validation_and_round_trip():
    cfg = OptimizerConfig(lags=2, pairs=3)
    d = cfg.to_dict()
    assert d["cond_limit"] == "inf"
    assert OptimizerConfig.from_dict(d) == cfg
    for bad in ({"lags": 0}, {"pairs": 0}, {"cond_limit": 1.0}, {"restarts": 0},
                {"gradient": "newton"}, {"tol": 0.0}, {"outer_max_iters": 0}):
        with pytest.raises(ValueError):
            OptimizerConfig(**bad)


def test_defaults():
    cfg = OptimizerConfig()
    assert (cfg.outer_max_iters, cfg.inner_max_evals, cfg.inner_max_iters) == (50, 10_000, 4000)
    assert cfg.tol == 1e-6 and cfg.restarts == 1 and cfg.gradient == "finite_difference"


def test_whitening_transform(rng):
    X = rng.standard_normal((4, 3)) @ rng.standard_normal((3, 500))  # rank 3
    S = X @ X.T / 500
    W, M = whitening_transform(S)
    assert W.shape == (4, 3)
    np.testing.assert_allclose(W.T @ S @ W, np.eye(3), atol=1e-10)
    np.testing.assert_allclose(W.T @ M, np.eye(3), atol=1e-10)


@pytest.mark.parametrize("gradient", ["finite_difference", "analytic"])
def test_identity_mixing_recovers_axes(gradient):
    s = two_source()
    cov = lag_covariance_set(s, 3)
    pair, trace = optimize_pair(cov, OptimizerConfig(lags=3, gradient=gradient))
    assert abs(pair.w[0]) > 0.95
    assert abs(pair.v[1]) > 0.95
    assert np.linalg.norm(pair.w) == pytest.approx(1.0, abs=1e-10)
    assert np.linalg.norm(pair.v) == pytest.approx(1.0, abs=1e-10)
    assert trace.converged


def test_sign_convention(chain_record):
    x, _, _ = chain_record
    d = decompose(x, OptimizerConfig(lags=2, pairs=2))
    for p in d.pairs:
        for u in (p.pair.w, p.pair.v):
            assert u[np.argmax(np.abs(u))] > 0


def test_trace_monotone_and_unit_norms(chain_record):
    x, _, _ = chain_record
    pair, trace = optimize_pair(lag_covariance_set(x, 2), OptimizerConfig(lags=2))
    obj = trace.objective
    assert obj[0] >= trace.initial_objective
    assert np.all(np.diff(obj) >= -1e-12)
    assert [r.block for r in trace.records[:2]] == ["v", "w"]
    assert trace.outer_values().shape == (trace.outer_iters, 2)
    assert trace.to_dict()["outer_iters"] == trace.outer_iters


def test_init_is_used(chain_record):
    x, _, _ = chain_record
    cov = lag_covariance_set(x, 2)
    cfg = OptimizerConfig(lags=2, outer_max_iters=1)
    p0 = ProjectionPair(np.ones(4), np.arange(1.0, 5.0))
    _, trace = optimize_pair(cov, cfg, init=p0)
    g, gtr = latent_stats(p0, cov).g_raw, latent_stats(p0.swapped(), cov.reversed()).g_raw
    assert trace.initial_objective == pytest.approx(g + gtr, abs=1e-10)


def test_determinism(chain_record):
    x, _, _ = chain_record
    cfg = OptimizerConfig(lags=2, pairs=2, seed=3)
    a, b = decompose(x, cfg), decompose(x, cfg)
    for pa, pb in zip(a.pairs, b.pairs):
        assert np.array_equal(pa.pair.w, pb.pair.w) and np.array_equal(pa.pair.v, pb.pair.v)
        assert pa.g_forward == pb.g_forward


def test_single_pair_is_prefix(chain_record):
    x, _, _ = chain_record
    one = decompose(x, OptimizerConfig(lags=2, pairs=1, seed=5))
    two = decompose(x, OptimizerConfig(lags=2, pairs=2, seed=5))
    assert np.array_equal(one.pairs[0].pair.w, two.pairs[0].pair.w)
    assert np.array_equal(one.pairs[0].pair.v, two.pairs[0].pair.v)
    assert len(two.pairs) == 2 and two.deflation_ranks == [4]


def test_deflation_orthogonality(chain_record):
    x, _, _ = chain_record
    L = 2
    d = decompose(x, OptimizerConfig(lags=L, pairs=2))
    y1 = d.pairs[0].y
    basis = removal_basis(y1, L)[1:]  # lags 0..L
    # stage-2 components live on the deflated data
    for comp in (d.pairs[1].y, d.pairs[1].z):
        c = np.abs([np.corrcoef(comp[L:], b[L:])[0, 1] for b in basis])
        full = np.abs(comp @ basis.T) / (np.linalg.norm(comp) * np.linalg.norm(basis, axis=1))
        assert full.max() < 1e-6
        assert c.max() < 0.05


def test_stationarity_at_convergence(chain_record):
    x, _, _ = chain_record
    cfg = OptimizerConfig(lags=2)
    cov = lag_covariance_set(x, 2)
    pair, trace = optimize_pair(cov, cfg)
    assert trace.converged
    g = combined_gradient(pair, cov, method="analytic")
    proj = np.r_[g.grad_w - (g.grad_w @ pair.w) * pair.w, g.grad_v - (g.grad_v @ pair.v) * pair.v]
    assert np.linalg.norm(proj) < 1e-3


def test_components_and_report_option(chain_record):
    x, _, _ = chain_record
    d = decompose(x, OptimizerConfig(lags=2, pairs=2, report_on_original=True))
    X = center(x.data)
    for p in d.pairs:
        np.testing.assert_allclose(p.y, p.pair.w @ X, atol=1e-12)
        np.testing.assert_allclose(p.forward_model_w, compute_forward_model(p.pair.w, X @ X.T / X.shape[1]))
    assert d.components().shape == (4, X.shape[1])
    assert d.component_labels() == ["y1", "z1", "y2", "z2"]
    m = d.causality_matrix()
    assert m.shape == (4, 4) and np.all(np.diag(m) == 0)


def test_restarts_pick_best(chain_record):
    x, _, _ = chain_record
    one = decompose(x, OptimizerConfig(lags=2, restarts=1, seed=2))
    three = decompose(x, OptimizerConfig(lags=2, restarts=3, seed=2))
    f1 = one.pairs[0].g_forward + one.pairs[0].g_reversed
    f3 = three.pairs[0].g_forward + three.pairs[0].g_reversed
    assert f3 >= f1 - 1e-9


def test_degenerate_stage_stops_early(rng):
    s = rng.standard_normal((2, 400))
    x = np.vstack([s, s[0] + s[1]])  # rank 2
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        d = decompose(x, OptimizerConfig(lags=1, pairs=3))
    assert len(d.pairs) < 3 and d.error
    assert any(issubclass(r.category, OptimizationWarning) for r in rec)


def test_forward_model_examples(rng):
    w = rng.standard_normal(4)
    np.testing.assert_allclose(compute_forward_model(w, np.eye(4)), w / (w @ w))
    u = w / np.linalg.norm(w)
    np.testing.assert_allclose(compute_forward_model(u, np.eye(4)), u)
    S = np.cov(rng.standard_normal((4, 100)))
    np.testing.assert_allclose(compute_forward_model(2.5 * w, S), compute_forward_model(w, S) / 2.5)
    with pytest.raises(ValueError):
        compute_forward_model(np.zeros(4), S)


def _truth_decomposition(S, order=(0, 1)):
    links = [(S[0], S[1]), (S[1], S[2])]
    pairs = [PairResult(ProjectionPair(np.ones(1), np.ones(1)), links[k][0], links[k][1], 0.0, 0.0,
                        np.ones(1), np.ones(1), ConvergenceTrace()) for k in order]
    return Decomposition(pairs, [], OptimizerConfig())


def test_match_components_self_match(chain_record):
    _, s, A = chain_record
    S = center(s.data)
    rep = match_components(_truth_decomposition(S), S, A, observations=A @ S)
    np.testing.assert_allclose(rep.component_r2, 1.0)
    assert rep.order == (0, 1) and not rep.swapped
    assert rep.mixing_r2 == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(rep.mixing_estimate, A, atol=1e-10)
    assert rep.to_dict()["order"] == [0, 1]


def test_match_components_detects_swap(chain_record):
    _, s, A = chain_record
    S = center(s.data)
    rep = match_components(_truth_decomposition(S, (1, 0)), S, A, observations=A @ S)
    assert rep.order == (1, 0) and rep.swapped
    np.testing.assert_allclose(rep.component_r2, 1.0)
    with pytest.raises(ValueError):
        match_components(Decomposition([], [], OptimizerConfig()), S, A, observations=A @ S)
