"""Strength of causality between projected latent signals.

Two independent routes are provided.  :func:`latent_stats` evaluates the
closed form from lagged covariances of the observations, and
:func:`causality_direct` fits the full and reduced regressions explicitly.
On a shared estimation window they agree to round-off.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .covariance import LagCovSet, MultiSeries, center

__all__ = [
    "ProjectionPair",
    "CausalityStats",
    "WienerFilters",
    "RankDeficiencyWarning",
    "latent_stats",
    "latent_stats_kron",
    "strength_batch",
    "combined_strength_batch",
    "time_reversed_stats",
    "combined_objective",
    "causality_direct",
    "pairwise_causality_matrix",
]


class RankDeficiencyWarning(UserWarning):
    """A regression design or predictor covariance was (numerically) singular."""


@dataclass(frozen=True)
class ProjectionPair:
    """Driving filter ``w`` and driven filter ``v``."""

    w: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "w", np.asarray(self.w, dtype=float).ravel())
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float).ravel())
        if self.w.shape != self.v.shape:
            raise ValueError(f"filter sizes differ: {self.w.shape} vs {self.v.shape}")

    def normalized(self) -> "ProjectionPair":
        return ProjectionPair(self.w / np.linalg.norm(self.w), self.v / np.linalg.norm(self.v))

    def swapped(self) -> "ProjectionPair":
        return ProjectionPair(self.v, self.w)


@dataclass(frozen=True)
class WienerFilters:
    h: np.ndarray  # reduced model, on z-past
    g1: np.ndarray  # full model, on z-past
    g2: np.ndarray  # full model, on y-past


@dataclass(frozen=True)
class CausalityStats:
    """Latent covariances, MMSEs and the strength of causality.

    ``g`` is clamped to ``[0, 1]``; ``g_raw`` is the unclamped value used for
    optimization and diagnostics.  ``pinv_fallback`` flags that ``R`` (and so
    possibly ``Q``) was not numerically positive definite.
    """

    sigma_z2: float
    q: np.ndarray
    Q: np.ndarray
    r: np.ndarray
    R: np.ndarray
    phi_f: float
    phi_r: float
    g: float
    g_raw: float
    chol: np.ndarray | None = field(default=None, repr=False, compare=False)
    pinv_fallback: bool = False

    @cached_property
    def gfull(self) -> np.ndarray:
        """Full-model Wiener filter ``R^{-1} r``, stacked ``(g1; g2)``."""
        if self.chol is None:
            return np.linalg.pinv(self.R, hermitian=True) @ self.r
        return cho_solve((self.chol, True), self.r, check_finite=False)

    @cached_property
    def h(self) -> np.ndarray:
        """Reduced-model Wiener filter ``Q^{-1} q``."""
        if self.chol is None:
            return np.linalg.pinv(self.Q, hermitian=True) @ self.q
        L = self.q.shape[0]
        return cho_solve((self.chol[:L, :L], True), self.q, check_finite=False)

    @property
    def filters(self) -> WienerFilters:
        L = self.q.shape[0]
        return WienerFilters(self.h, self.gfull[:L], self.gfull[L:])


_INDEX_CACHE: dict[int, np.ndarray] = {}


def _toeplitz_index(L: int) -> np.ndarray:
    if L not in _INDEX_CACHE:
        i = np.arange(L)
        _INDEX_CACHE[L] = i[None, :] - i[:, None] + L - 1
    return _INDEX_CACHE[L]


def _finish(sigma_z2, q, Q, r, R) -> CausalityStats:
    # Q and q lead R and r, so one Cholesky factor and one forward solve
    # give both quadratic forms.
    L = q.shape[0]
    try:
        chol = np.linalg.cholesky(R)
        u = solve_triangular(chol, r, lower=True, check_finite=False)
        quad_r = float(u[:L] @ u[:L])
        quad_f = float(u @ u)
        fallback = False
    except np.linalg.LinAlgError:
        chol = None
        quad_r = float(q @ np.linalg.pinv(Q, hermitian=True) @ q)
        quad_f = float(r @ np.linalg.pinv(R, hermitian=True) @ r)
        fallback = True
        warnings.warn("predictor covariance not positive definite; used pseudo-inverse",
                      RankDeficiencyWarning, stacklevel=3)
    phi_r = float(sigma_z2) - quad_r
    phi_f = float(sigma_z2) - quad_f
    g_raw = 1.0 - phi_f / phi_r if phi_r != 0 else float("nan")
    g = float(min(max(g_raw, 0.0), 1.0)) if np.isfinite(g_raw) else float("nan")
    return CausalityStats(float(sigma_z2), q, Q, r, R, phi_f, phi_r, g, g_raw, chol, fallback)


def latent_stats(p: ProjectionPair, cov: LagCovSet) -> CausalityStats:
    """Closed-form causality statistics for ``y = w^T x`` driving ``z = v^T x``.

    Evaluates the quadratic forms blockwise instead of materializing the
    Kronecker factors; :func:`latent_stats_kron` is the literal product form.
    """
    L, D = cov.L, cov.D
    if p.w.shape[0] != D:
        raise ValueError(f"filters have {p.w.shape[0]} entries, covariances are {D}x{D}")
    U = np.stack([p.v, p.w])
    toep = U @ cov.toeplitz_lags() @ U.T
    diag = p.v @ cov.diag_lags() @ U.T
    idx = _toeplitz_index(L)
    Q = toep[idx, 0, 0]
    R = np.block([[Q, toep[idx, 0, 1]], [toep[idx, 1, 0], toep[idx, 1, 1]]])
    q = diag[:, 0]
    r = np.concatenate([q, diag[:, 1]])
    return _finish(toep[L - 1, 0, 0], q, Q, r, R)


_BATCH_INDEX: dict[int, tuple[np.ndarray, ...]] = {}


def _batch_index(L: int) -> tuple[np.ndarray, ...]:
    if L not in _BATCH_INDEX:
        m = np.arange(2 * L)
        blk, lag = m // L, m % L
        k = lag[None, :] - lag[:, None] + L - 1
        _BATCH_INDEX[L] = (k, np.repeat(blk[:, None], 2 * L, 1), np.repeat(blk[None, :], 2 * L, 0))
    return _BATCH_INDEX[L]


def _strength_core(W: np.ndarray, V: np.ndarray, toep: np.ndarray, diag: np.ndarray) -> np.ndarray:
    # toep (m, 2L-1, D, D) and diag (m, L, D, D) broadcast against the n pairs
    L = diag.shape[-3]
    U = np.stack([V, W], axis=1)  # (n, 2, D)
    F = (U[:, None] @ toep) @ U.transpose(0, 2, 1)[:, None]  # (n, K, 2, 2)
    k, a, b = _batch_index(L)
    R = F[:, k, a, b]
    d = (V[:, None, None, :] @ diag) @ U.transpose(0, 2, 1)[:, None]  # (n, L, 1, 2)
    r = np.concatenate([d[:, :, 0, 0], d[:, :, 0, 1]], axis=1)
    sigma_z2 = F[:, L - 1, 0, 0]
    try:
        u = np.linalg.solve(np.linalg.cholesky(R), r[..., None])[..., 0]
        quad_r = np.einsum("ni,ni->n", u[:, :L], u[:, :L])
        quad_f = np.einsum("ni,ni->n", u, u)
    except np.linalg.LinAlgError:
        quad_f = np.einsum("ni,nij,nj->n", r, np.linalg.pinv(R, hermitian=True), r)
        q = r[:, :L]
        quad_r = np.einsum("ni,nij,nj->n", q, np.linalg.pinv(R[:, :L, :L], hermitian=True), q)
    with np.errstate(divide="ignore", invalid="ignore"):
        return 1.0 - (sigma_z2 - quad_f) / (sigma_z2 - quad_r)


def strength_batch(W: np.ndarray, V: np.ndarray, cov: LagCovSet) -> np.ndarray:
    """Unclamped strength of causality for many filter pairs at once.

    ``W`` and ``V`` have shape ``(n, D)``; row ``i`` is one driving/driven
    pair.  Numerically identical to ``latent_stats(...).g_raw`` but avoids
    per-pair Python overhead.
    """
    return _strength_core(W, V, cov.toeplitz_lags()[None], cov.diag_lags()[None])


def combined_strength_batch(W: np.ndarray, V: np.ndarray, cov: LagCovSet,
                            cov_rev: LagCovSet) -> tuple[np.ndarray, np.ndarray]:
    """``(G(w, v), Gtr(v, w))`` for many pairs in one batched evaluation."""
    n = W.shape[0]
    toep = np.stack([cov.toeplitz_lags(), cov_rev.toeplitz_lags()])
    diag = np.stack([cov.diag_lags(), cov_rev.diag_lags()])
    sel = np.repeat([0, 1], n)
    out = _strength_core(np.concatenate([W, V]), np.concatenate([V, W]), toep[sel], diag[sel])
    return out[:n], out[n:]


def latent_stats_kron(p: ProjectionPair, cov: LagCovSet) -> CausalityStats:
    """Same statistics computed from the explicit Kronecker-product factorization."""
    L, D = cov.L, cov.D
    v, w = p.v[:, None], p.w[:, None]
    S, T = cov.sigma_block_diag, cov.sigma_block_toeplitz
    IL, ones = np.eye(L), np.ones((L, 1))
    q = (np.kron(IL, v.T) @ S @ np.kron(ones, v)).ravel()
    Q = np.kron(IL, v).T @ T @ np.kron(IL, v)
    r = (np.kron(np.eye(2 * L), v.T) @ np.kron(np.eye(2), S)
         @ np.vstack([np.kron(ones, v), np.kron(ones, w)])).ravel()
    left = np.vstack([np.kron(np.ones((1, 2)), np.kron(IL, v.T)),
                      np.kron(np.ones((1, 2)), np.kron(IL, w.T))])
    zero = np.zeros((L * D, L))
    right = np.block([[np.kron(IL, v), zero], [zero, np.kron(IL, w)]])
    R = left @ np.kron(np.eye(2), T) @ right
    sigma_z2 = (v.T @ cov.sigma0 @ v).item()
    return _finish(sigma_z2, q, Q, r, R)


def time_reversed_stats(p: ProjectionPair, cov: LagCovSet, cov_rev: LagCovSet | None = None) -> CausalityStats:
    """Causality from ``v^T x(-t)`` to ``w^T x(-t)``.

    ``p`` is the forward pair; the roles are swapped here.  ``cov_rev`` may be
    passed to reuse an already reversed covariance set.
    """
    return latent_stats(p.swapped(), cov.reversed() if cov_rev is None else cov_rev)


def combined_objective(p: ProjectionPair, cov: LagCovSet, cov_rev: LagCovSet | None = None) -> tuple[float, float]:
    """Unclamped forward and reversed strengths, ``(G(w, v), Gtr(v, w))``."""
    fwd = latent_stats(p, cov)
    rev = time_reversed_stats(p, cov, cov_rev)
    return fwd.g_raw, rev.g_raw


def _lag_design(s: np.ndarray, L: int, window: str) -> tuple[np.ndarray, np.ndarray]:
    """Target vector and ``L`` lagged copies of ``s`` as columns."""
    T = s.shape[0]
    if window == "valid":
        target = s[L:]
        cols = [s[L - l:T - l] for l in range(1, L + 1)]
    elif window == "full":
        padded = np.concatenate([np.zeros(L), s, np.zeros(L)])
        target = padded[L:]
        cols = [padded[L - l:T + 2 * L - l] for l in range(1, L + 1)]
    else:
        raise ValueError(f"unknown window {window!r}")
    return target, np.column_stack(cols)


def _residual_ss(A: np.ndarray, b: np.ndarray) -> float:
    coef, _, rank, _ = np.linalg.lstsq(A, b, rcond=None)
    if rank < A.shape[1]:
        warnings.warn(f"design matrix rank {rank} < {A.shape[1]}", RankDeficiencyWarning, stacklevel=3)
    resid = b - A @ coef
    return float(resid @ resid)


def causality_direct(f, g, L: int, window: str = "valid", clamp: bool = True) -> float:
    """Strength of causality from ``f`` to ``g`` by explicit least squares.

    The reduced model predicts ``g(t)`` from ``g(t-1..t-L)``, the full model
    adds ``f(t-1..t-L)``.  No intercept is fitted, so inputs are expected to
    be centered.
    """
    f = np.asarray(f, dtype=float).ravel()
    g = np.asarray(g, dtype=float).ravel()
    if f.shape != g.shape:
        raise ValueError("f and g must have equal length")
    if f.shape[0] <= 3 * L:
        raise ValueError(f"need T > 3L samples, got T={f.shape[0]}, L={L}")
    target, Zg = _lag_design(g, L, window)
    _, Zf = _lag_design(f, L, window)
    ss_r = _residual_ss(Zg, target)
    ss_f = _residual_ss(np.hstack([Zg, Zf]), target)
    value = 1.0 - ss_f / ss_r
    return float(min(max(value, 0.0), 1.0)) if clamp else float(value)


def pairwise_causality_matrix(x, L: int, window: str = "valid") -> np.ndarray:
    """``G[i, j]`` is the strength of causality from channel ``i`` to channel ``j``."""
    X = center(x.data if isinstance(x, MultiSeries) else np.asarray(x, dtype=float))
    D = X.shape[0]
    G = np.zeros((D, D))
    for i in range(D):
        for j in range(D):
            if i != j:
                G[i, j] = causality_direct(X[i], X[j], L, window)
    return G
