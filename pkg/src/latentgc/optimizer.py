"""Grouped coordinate ascent for latent causal component pairs.

Each pair ``(w, v)`` maximizes ``G(w, v) + Gtr(v, w)``: the strength of
causality from ``y = w^T x`` to ``z = v^T x`` plus the strength in the
opposite direction on the time-reversed record.  The driven filter ``v`` and
the driving filter ``w`` are updated in turn, each by projected gradient
ascent on the unit sphere.  After a pair is found, the driving signal and its
lags are regressed out of the data and the next pair is sought.

Optimization runs in coordinates whitened by the lag-zero covariance of the
current stage.  The objective only depends on the directions of ``w`` and
``v`` within the span of the data, so this is a change of parametrization
that also drops directions carrying no variance (e.g. more sensors than
sources).
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .causality import ProjectionPair, _strength_core, latent_stats
from .covariance import LagCovSet, MultiSeries, center, lag_covariance_set
from .deflation import deflate, removal_basis
from .gradient import combined_gradient

__all__ = [
    "OptimizerConfig",
    "TraceRecord",
    "ConvergenceTrace",
    "PairResult",
    "Decomposition",
    "OptimizationWarning",
    "optimize_pair",
    "decompose",
    "compute_forward_model",
    "match_components",
    "FidelityReport",
    "whitening_transform",
]

GRADIENTS = ("analytic", "finite_difference")


class OptimizationWarning(UserWarning):
    """Non-fatal optimizer trouble: no initial progress, degenerate stage."""


@dataclass(frozen=True)
class OptimizerConfig:
    """Settings for :func:`optimize_pair` and :func:`decompose`.

    ``tol`` is applied to the change of both ``G`` and ``Gtr`` between
    successive outer iterations.  ``inner_tol`` stops an inner solve when a
    step improves the block objective by less than that amount.
    ``gradient`` selects the closed-form gradient or central differences
    with step ``fd_step``.
    """

    lags: int = 3
    pairs: int = 1
    cond_limit: float = np.inf
    outer_max_iters: int = 50
    inner_max_evals: int = 10_000
    inner_max_iters: int = 4000
    tol: float = 1e-6
    inner_tol: float = 1e-10
    grad_tol: float = 1e-8
    seed: int = 0
    init_scale: float = 1.0
    restarts: int = 1
    gradient: str = "finite_difference"
    fd_step: float = 1e-6
    window: str = "valid"
    deflate_lag0: bool = True
    report_on_original: bool = False
    whiten_rtol: float = 1e-10

    def __post_init__(self):
        if self.lags < 1:
            raise ValueError(f"lags must be >= 1, got {self.lags}")
        if self.pairs < 1:
            raise ValueError(f"pairs must be >= 1, got {self.pairs}")
        if not self.cond_limit > 1:
            raise ValueError(f"cond_limit must exceed 1, got {self.cond_limit}")
        if self.restarts < 1:
            raise ValueError(f"restarts must be >= 1, got {self.restarts}")
        if self.gradient not in GRADIENTS:
            raise ValueError(f"gradient must be one of {GRADIENTS}, got {self.gradient!r}")
        if min(self.outer_max_iters, self.inner_max_evals, self.inner_max_iters) < 1:
            raise ValueError("iteration and evaluation caps must be positive")
        if not self.tol > 0 or not self.init_scale > 0:
            raise ValueError("tol and init_scale must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["cond_limit"] = "inf" if np.isinf(self.cond_limit) else float(self.cond_limit)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "OptimizerConfig":
        d = dict(d)
        if "cond_limit" in d:
            d["cond_limit"] = float(d["cond_limit"])
        return cls(**d)


@dataclass(frozen=True)
class TraceRecord:
    outer: int
    block: str
    g: float
    g_reversed: float
    grad_norm_w: float
    grad_norm_v: float
    inner_iters: int
    inner_evals: int

    @property
    def objective(self) -> float:
        return self.g + self.g_reversed


@dataclass
class ConvergenceTrace:
    """One record per block update, plus the outcome of the outer loop."""

    records: list[TraceRecord] = field(default_factory=list)
    converged: bool = False
    outer_iters: int = 0
    restart: int = 0
    initial_objective: float = float("nan")

    @property
    def objective(self) -> np.ndarray:
        return np.array([r.objective for r in self.records])

    def outer_values(self) -> np.ndarray:
        """``(G, Gtr)`` at the end of each outer iteration, shape ``(n, 2)``."""
        ends = [r for r in self.records if r.block == "w"]
        return np.array([(r.g, r.g_reversed) for r in ends]).reshape(-1, 2)

    def to_dict(self) -> dict:
        return {"converged": self.converged, "outer_iters": self.outer_iters, "restart": self.restart,
                "initial_objective": self.initial_objective, "records": [asdict(r) for r in self.records]}


@dataclass
class PairResult:
    pair: ProjectionPair
    y: np.ndarray
    z: np.ndarray
    g_forward: float
    g_reversed: float
    forward_model_w: np.ndarray
    forward_model_v: np.ndarray
    trace: ConvergenceTrace


@dataclass
class Decomposition:
    """Ordered component pairs extracted by sequential deflation.

    ``data`` is the record the decomposition was run on; ``error`` holds a
    message when a stage failed or stopped early and fewer than
    ``config.pairs`` pairs are returned.
    """

    pairs: list[PairResult]
    deflation_ranks: list[int]
    config: OptimizerConfig
    data: MultiSeries | None = None
    error: str | None = None

    @property
    def filters_w(self) -> np.ndarray:
        return np.array([p.pair.w for p in self.pairs])

    @property
    def filters_v(self) -> np.ndarray:
        return np.array([p.pair.v for p in self.pairs])

    def components(self) -> np.ndarray:
        """Rows ``y1, z1, y2, z2, ...``."""
        return np.array([s for p in self.pairs for s in (p.y, p.z)])

    def component_labels(self) -> list[str]:
        return [f"{c}{i + 1}" for i in range(len(self.pairs)) for c in ("y", "z")]

    def causality_matrix(self, window: str | None = None) -> np.ndarray:
        """Strength of causality among all recovered components (rows drive columns)."""
        from .causality import pairwise_causality_matrix
        return pairwise_causality_matrix(self.components(), self.config.lags, window or self.config.window)


# ---------------------------------------------------------------- whitening

def whitening_transform(sigma0: np.ndarray, rtol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """``(W, M)`` with ``W^T sigma0 W = I`` on the retained eigen-directions.

    ``W = E / sqrt(lam)`` maps whitened filters to sensor filters and
    ``M = E * sqrt(lam)`` maps sensor filters to whitened ones (``W^T M = I``).
    Directions with eigenvalue below ``rtol * lam_max`` are dropped.
    """
    lam, E = np.linalg.eigh(0.5 * (sigma0 + sigma0.T))
    if lam[-1] <= 0:
        return np.zeros((sigma0.shape[0], 0)), np.zeros((sigma0.shape[0], 0))
    keep = lam > rtol * lam[-1]
    lam, E = lam[keep][::-1], E[:, keep][:, ::-1]
    return E / np.sqrt(lam), E * np.sqrt(lam)


def _sign_fix(u: np.ndarray) -> np.ndarray:
    u = u / np.linalg.norm(u)
    return -u if u[np.argmax(np.abs(u))] < 0 else u


# ---------------------------------------------------------------- inner solver

class _Objective:
    """``G(w, v) + Gtr(v, w)`` and its block gradients on fixed covariances."""

    def __init__(self, cov: LagCovSet, cov_rev: LagCovSet, cfg: OptimizerConfig):
        self.cov, self.cov_rev, self.cfg = cov, cov_rev, cfg
        self.evals = 0
        # forward and reversed lag stacks, evaluated together in one batch
        self._toep = np.stack([cov.toeplitz_lags(), cov_rev.toeplitz_lags()])
        self._diag = np.stack([cov.diag_lags(), cov_rev.diag_lags()])

    def values(self, W: np.ndarray, V: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        W, V = np.atleast_2d(W), np.atleast_2d(V)
        self.evals += W.shape[0]
        n = W.shape[0]
        sel = np.repeat([0, 1], n)
        out = _strength_core(np.concatenate([W, V]), np.concatenate([V, W]), self._toep[sel], self._diag[sel])
        return out[:n], out[n:]

    def value(self, w, v) -> tuple[float, float]:
        g, gtr = self.values(w, v)
        return float(g[0]), float(gtr[0])

    def gradient(self, w: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if self.cfg.gradient == "analytic":
            try:
                self.evals += 2
                gr = combined_gradient(ProjectionPair(w, v), self.cov, self.cov_rev, "analytic", materialize=False)
                return gr.grad_w, gr.grad_v
            except np.linalg.LinAlgError:
                pass
        return self._fd_gradient(w, v)

    def _fd_gradient(self, w, v):
        n = w.shape[0]
        x = np.concatenate([w, v])
        steps = self.cfg.fd_step * np.maximum(1.0, np.abs(x))
        P = np.concatenate([np.diag(steps), -np.diag(steps)])
        X = x + P
        g, gtr = self.values(X[:, :n], X[:, n:])
        f = g + gtr
        d = (f[:2 * n] - f[2 * n:]) / (2 * steps)
        return d[:n], d[n:]


def _tangent(g: np.ndarray, u: np.ndarray) -> np.ndarray:
    return g - (g @ u) * u


_HALVINGS = 0.5 ** np.arange(60)


def _ascend_block(obj: _Objective, w, v, block: str, f0: float, cfg: OptimizerConfig):
    """Projected gradient ascent over one filter with the other held fixed.

    Returns ``(w, v, f, iters, evals)``.  Each step moves along the unit
    tangent direction; its length starts at 1.0 and is halved until the
    Armijo condition holds and the objective rises.  Measuring the step along
    the normalized direction keeps the search independent of the overall
    scale of the objective.  The halving sequence is evaluated in vectorized
    chunks; the accepted step and the evaluation count are those of the
    sequential search.
    """
    start_evals = obj.evals
    f = f0
    it = 0
    c1 = 1e-4
    chunk = 8
    while it < cfg.inner_max_iters and obj.evals - start_evals < cfg.inner_max_evals:
        gw, gv = obj.gradient(w, v)
        u = w if block == "w" else v
        d = _tangent(gw if block == "w" else gv, u)
        dn2 = float(d @ d)
        if not np.isfinite(dn2):
            raise FloatingPointError("non-finite gradient; the covariances may be singular")
        dn = np.sqrt(dn2)
        if dn < cfg.grad_tol:
            break
        d = d / dn
        accepted = None
        for lo in range(0, _HALVINGS.size, chunk):
            alphas = _HALVINGS[lo:lo + chunk]
            cand = u + alphas[:, None] * d
            cand /= np.linalg.norm(cand, axis=1, keepdims=True)
            fixed = np.broadcast_to(v if block == "w" else w, cand.shape)
            g, gtr = obj.values(cand, fixed) if block == "w" else obj.values(fixed, cand)
            obj.evals -= alphas.size
            fc = g + gtr
            ok = np.isfinite(fc) & (fc >= f + c1 * alphas * dn) & (fc > f)
            if ok.any():
                k = int(np.argmax(ok))
                obj.evals += k + 1
                accepted = (cand[k], float(fc[k]))
                break
            obj.evals += alphas.size
            if obj.evals - start_evals >= cfg.inner_max_evals:
                break
        it += 1
        if accepted is None:
            break
        cand, fc = accepted
        gain = fc - f
        if block == "w":
            w = cand
        else:
            v = cand
        f = fc
        if gain < cfg.inner_tol:
            break
    return w, v, f, it, obj.evals - start_evals


def _tangent_norms(obj: _Objective, w, v) -> tuple[float, float]:
    gw, gv = obj.gradient(w, v)
    return float(np.linalg.norm(_tangent(gw, w))), float(np.linalg.norm(_tangent(gv, v)))


def _run_from(obj: _Objective, w, v, cfg: OptimizerConfig, restart: int):
    w, v = w / np.linalg.norm(w), v / np.linalg.norm(v)
    g, gtr = obj.value(w, v)
    if not np.isfinite(g + gtr):
        raise FloatingPointError("non-finite objective at the initial point; the covariances may be singular")
    trace = ConvergenceTrace(restart=restart, initial_objective=g + gtr)
    f = g + gtr
    prev = (g, gtr)
    for outer in range(1, cfg.outer_max_iters + 1):
        for block in ("v", "w"):
            w, v, f_new, iters, evals = _ascend_block(obj, w, v, block, f, cfg)
            if f_new < f - 1e-12 * max(1.0, abs(f)):
                raise AssertionError("objective decreased during a block update")
            f = f_new
            g, gtr = obj.value(w, v)
            nw, nv = _tangent_norms(obj, w, v)
            trace.records.append(TraceRecord(outer, block, g, gtr, nw, nv, iters, evals))
        trace.outer_iters = outer
        if abs(g - prev[0]) < cfg.tol and abs(gtr - prev[1]) < cfg.tol:
            trace.converged = True
            break
        prev = (g, gtr)
    return w, v, f, trace


def _optimize_whitened(covw: LagCovSet, cfg: OptimizerConfig, inits: list[tuple[np.ndarray, np.ndarray]]):
    obj = _Objective(covw, covw.reversed(), cfg)
    best = None
    for k, (w0, v0) in enumerate(inits):
        w, v, f, trace = _run_from(obj, w0, v0, cfg, k)
        if best is None or f > best[2]:  # ties keep the lower restart index
            best = (w, v, f, trace)
    first = [r.objective for r in best[3].records[:2]]
    if first and not first[-1] > best[3].initial_objective:
        warnings.warn("optimizer made no progress in the first iteration of any restart; "
                      "returning the best point found", OptimizationWarning, stacklevel=3)
    return best


def _initial_points(n: int, cfg: OptimizerConfig, rng: np.random.Generator):
    return [(cfg.init_scale * rng.standard_normal(n), cfg.init_scale * rng.standard_normal(n))
            for _ in range(cfg.restarts)]


def optimize_pair(cov: LagCovSet, cfg: OptimizerConfig, init: ProjectionPair | None = None,
                  seed=None) -> tuple[ProjectionPair, ConvergenceTrace]:
    """Find unit-norm ``(w, v)`` maximizing ``G(w, v) + Gtr(v, w)``.

    Parameters
    ----------
    cov : LagCovSet
        Lagged covariances of the (centered) data, regularized as desired.
    cfg : OptimizerConfig
    init : ProjectionPair, optional
        Starting filters in sensor coordinates.  When given, ``restarts`` is
        ignored and a single run is made from this point.
    seed : optional
        Overrides ``cfg.seed`` for the random initial points.

    Returns
    -------
    pair : ProjectionPair
        Sensor-space filters, unit norm, largest-magnitude entry positive.
    trace : ConvergenceTrace
    """
    W, M = whitening_transform(cov.sigma0, cfg.whiten_rtol)
    if W.shape[1] < 2:
        raise ValueError(f"data span {W.shape[1]} effective dimension(s); at least 2 are needed")
    covw = cov.congruence(W)
    if init is not None:
        inits = [(M.T @ init.w, M.T @ init.v)]
    else:
        rng = np.random.default_rng(cfg.seed if seed is None else seed)
        inits = _initial_points(W.shape[1], cfg, rng)
    w, v, _, trace = _optimize_whitened(covw, cfg, inits)
    return ProjectionPair(_sign_fix(W @ w), _sign_fix(W @ v)), trace


# ---------------------------------------------------------------- decomposition

def compute_forward_model(f: np.ndarray, sigma0: np.ndarray) -> np.ndarray:
    """Spatial pattern ``Sigma(0) f / (f^T Sigma(0) f)`` of the component ``f^T x``.

    Examples
    --------
    >>> compute_forward_model(np.array([3.0, 4.0]), np.eye(2))
    array([0.12, 0.16])
    """
    f = np.asarray(f, dtype=float).ravel()
    s = np.asarray(sigma0, dtype=float) @ f
    power = float(f @ s)
    if not power > 0:
        raise ValueError("filter output has zero power")
    return s / power


def _stage_seed(seed: int, stage: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, stage]))


def decompose(x, cfg: OptimizerConfig) -> Decomposition:
    """Extract up to ``cfg.pairs`` causal component pairs from ``x``.

    Stage ``p`` estimates covariances of the current data, optimizes a pair,
    records the components, regresses the driving signal and its lags out of
    the data and re-centers.  Components and forward models are computed on
    the stage data unless ``cfg.report_on_original`` is set.  A stage that
    fails or has fewer than two effective dimensions ends the decomposition
    early; the pairs found so far are returned with ``error`` set.
    """
    series = x if isinstance(x, MultiSeries) else MultiSeries(x)
    series.check_finite()
    original = center(series.data)
    current = original
    sigma0_original = original @ original.T / original.shape[1]
    pairs: list[PairResult] = []
    ranks: list[int] = []
    error = None
    for stage in range(cfg.pairs):
        try:
            cov = lag_covariance_set(current, cfg.lags, cfg.cond_limit, cfg.window)
            W, M = whitening_transform(cov.sigma0, cfg.whiten_rtol)
            if W.shape[1] < 2:
                error = f"stage {stage + 1}: fewer than 2 effective dimensions remain"
                warnings.warn(error + "; stopping early", OptimizationWarning, stacklevel=2)
                break
            rng = _stage_seed(cfg.seed, stage)
            covw = cov.congruence(W)
            w, v, _, trace = _optimize_whitened(covw, cfg, _initial_points(W.shape[1], cfg, rng))
        except (FloatingPointError, np.linalg.LinAlgError, ValueError) as exc:
            error = f"stage {stage + 1}: {exc}"
            warnings.warn(error, OptimizationWarning, stacklevel=2)
            break
        pair = ProjectionPair(_sign_fix(W @ w), _sign_fix(W @ v))
        stats = latent_stats(pair, cov)
        rev = latent_stats(pair.swapped(), cov.reversed())
        report, sigma0 = (original, sigma0_original) if cfg.report_on_original else (current, cov.sigma0)
        y_stage = pair.w @ current
        pairs.append(PairResult(
            pair=pair,
            y=pair.w @ report,
            z=pair.v @ report,
            g_forward=stats.g,
            g_reversed=rev.g,
            forward_model_w=compute_forward_model(pair.w, sigma0),
            forward_model_v=compute_forward_model(pair.v, sigma0),
            trace=trace,
        ))
        if stage + 1 < cfg.pairs:
            basis = removal_basis(y_stage, cfg.lags, cfg.deflate_lag0)
            ranks.append(int(np.linalg.matrix_rank(basis)))
            current = center(deflate(current, y_stage, cfg.lags, cfg.deflate_lag0))
    return Decomposition(pairs, ranks, cfg, series, error)


# ---------------------------------------------------------------- fidelity

@dataclass
class FidelityReport:
    """Agreement of recovered components with known sources.

    ``order[i]`` is the recovered pair assigned to true link ``i``;
    ``component_r2`` has one ``(r2_driver, r2_driven)`` row per link;
    ``mixing_estimate`` holds sign- and scale-corrected forward models in
    the columns of the true mixing matrix.
    """

    order: tuple[int, ...]
    component_r2: np.ndarray
    mixing_r2: float
    mixing_estimate: np.ndarray
    swapped: bool

    def to_dict(self) -> dict:
        return {"order": list(self.order), "component_r2": self.component_r2.tolist(),
                "mixing_r2": self.mixing_r2, "mixing_estimate": self.mixing_estimate.tolist(),
                "swapped": self.swapped}


def _r2(a: np.ndarray, b: np.ndarray) -> float:
    a, b = a - a.mean(), b - b.mean()
    den = np.sqrt((a @ a) * (b @ b))
    return float((a @ b / den) ** 2) if den > 0 else 0.0


def match_components(recovered: Decomposition, truth_sources, truth_mixing,
                     links: tuple[tuple[int, int], ...] = ((0, 1), (1, 2)),
                     observations=None) -> FidelityReport:
    """Assign recovered pairs to true causal links and score their fidelity.

    Every assignment of recovered pairs to ``links`` (driver index, driven
    index into the true sources) is scored by the summed squared correlation
    of ``y`` with the driver and ``z`` with the driven source; the best one
    is kept.  Each true source is then represented by the driving component
    of a link it drives, else by the driven component of a link it receives.
    The observations are regressed jointly onto these representatives; each
    coefficient column is sign- and norm-matched to the true mixing column,
    and ``mixing_r2`` is the squared correlation of the flattened estimated
    and true matrices.
    """
    S = truth_sources.data if isinstance(truth_sources, MultiSeries) else np.asarray(truth_sources, float)
    A = np.asarray(truth_mixing, dtype=float)
    if observations is None:
        observations = recovered.data if recovered.data is not None else A @ S
    X = center(observations.data if isinstance(observations, MultiSeries) else np.asarray(observations, float))
    n_pairs = len(recovered.pairs)
    if n_pairs < len(links):
        raise ValueError(f"{n_pairs} recovered pairs for {len(links)} links")
    best, best_score = None, -np.inf
    for order in itertools.permutations(range(n_pairs), len(links)):
        table = np.array([[_r2(recovered.pairs[k].y, S[d]), _r2(recovered.pairs[k].z, S[t])]
                          for k, (d, t) in zip(order, links)])
        if table.sum() > best_score + 1e-12:
            best, best_score = (order, table), table.sum()
    order, table = best
    reps: list[np.ndarray | None] = []
    for j in range(A.shape[1]):
        comp = next((recovered.pairs[k].y for k, (d, _) in zip(order, links) if d == j), None)
        if comp is None:
            comp = next((recovered.pairs[k].z for k, (_, t) in zip(order, links) if t == j), None)
        reps.append(comp)
    have = [j for j, c in enumerate(reps) if c is not None]
    est = np.full_like(A, np.nan)
    if have:
        C = center(np.array([reps[j] for j in have]))
        # joint least squares X ~ A_hat C, so correlated components do not leak into each other's column
        coef, *_ = np.linalg.lstsq(C.T, X.T, rcond=None)
        for a, j in zip(coef, have):
            a = a * np.linalg.norm(A[:, j]) / np.linalg.norm(a)
            est[:, j] = a if a @ A[:, j] >= 0 else -a
    ok = ~np.isnan(est)
    mixing_r2 = _r2(est[ok], A[ok])
    return FidelityReport(tuple(order), table, mixing_r2, est, tuple(order) != tuple(range(len(links))))
