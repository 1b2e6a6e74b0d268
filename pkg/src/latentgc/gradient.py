"""Gradient of the strength of causality with respect to both filters.

The Jacobians of ``q``, ``Q``, ``r`` and ``R`` are available in two forms:

* materialized, built literally from Kronecker products, commutation
  matrices and the ``I_{4,2}`` selector;
* structured, where every identity-factor Kronecker product is applied as a
  block operation on the per-lag covariances.

Both are checked against central finite differences in the test suite.
Gradients are ordered ``(v, w)`` internally, matching the differential
``(dv; dw)``, and returned split as ``grad_w`` / ``grad_v``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .causality import CausalityStats, ProjectionPair, latent_stats
from .covariance import LagCovSet, lag_covariance_set

__all__ = [
    "GradientResult",
    "vec",
    "unvec",
    "commutation_matrix",
    "selector_4_2",
    "jacobian_q",
    "jacobian_Q",
    "jacobian_r",
    "jacobian_R",
    "analytic_gradient",
    "finite_diff_gradient",
    "combined_gradient",
    "gradient_check",
    "MATERIALIZE_MAX_LD",
]

# Above this LD the Kronecker factors are applied blockwise.
MATERIALIZE_MAX_LD = 64


@dataclass(frozen=True)
class GradientResult:
    grad_w: np.ndarray
    grad_v: np.ndarray
    method: str  # "analytic" or "finite_difference"

    def __add__(self, other: "GradientResult") -> "GradientResult":
        return GradientResult(self.grad_w + other.grad_w, self.grad_v + other.grad_v, self.method)

    def swapped(self) -> "GradientResult":
        return GradientResult(self.grad_v, self.grad_w, self.method)


# -- Kronecker helpers ----------------------------------------------------


def vec(a: np.ndarray) -> np.ndarray:
    """Stack the columns of ``a`` into a vector."""
    return np.asarray(a).reshape(-1, order="F")


def unvec(x: np.ndarray, m: int, n: int) -> np.ndarray:
    return np.asarray(x).reshape(m, n, order="F")


def commutation_matrix(m: int, n: int) -> np.ndarray:
    """``K_{mn}`` with ``K_{mn} vec(A) = vec(A^T)`` for ``m x n`` matrices ``A``."""
    K = np.zeros((m * n, m * n))
    i, j = np.meshgrid(np.arange(m), np.arange(n), indexing="ij")
    K[(j + n * i).ravel(), (i + m * j).ravel()] = 1.0
    return K


def selector_4_2() -> np.ndarray:
    """4x2 matrix with ones at (1,1) and (4,2): ``vec E11`` and ``vec E22`` as columns."""
    s = np.zeros((4, 2))
    s[0, 0] = s[3, 1] = 1.0
    return s


def _dvec_kron_identity(n: int, p: int, q: int) -> np.ndarray:
    """Jacobian of ``vec(I_n (x) B)`` with respect to ``vec(B)`` for ``p x q`` ``B``."""
    return np.kron(np.eye(n), np.kron(commutation_matrix(q, n), np.eye(p))) @ np.kron(
        vec(np.eye(n))[:, None], np.eye(p * q))


def _use_materialized(cov: LagCovSet, materialize: bool | None) -> bool:
    if materialize is None:
        return cov.L * cov.D <= MATERIALIZE_MAX_LD
    return materialize


# -- Jacobians ------------------------------------------------------------


def jacobian_q(p: ProjectionPair, cov: LagCovSet, materialize: bool | None = None) -> np.ndarray:
    """``dq = J_q dv``; shape ``(L, D)``."""
    L, D = cov.L, cov.D
    v = p.v[:, None]
    if not _use_materialized(cov, materialize):
        Dl = cov.diag_lags()
        return np.einsum("d,lde->le", p.v, Dl) + np.einsum("lde,e->ld", Dl, p.v)
    S = cov.sigma_block_diag
    ones = np.ones((L, 1))
    first = np.kron(np.kron(ones, v).T @ S.T, np.eye(L)) @ _dvec_kron_identity(L, 1, D)
    second = np.kron(np.eye(L), v).T @ S @ np.kron(ones, np.eye(D))
    return first + second


def jacobian_Q(p: ProjectionPair, cov: LagCovSet, materialize: bool | None = None) -> np.ndarray:
    """``vec dQ = J_Q dv``; shape ``(L*L, D)``."""
    L, D = cov.L, cov.D
    v = p.v[:, None]
    if not _use_materialized(cov, materialize):
        toep = cov.toeplitz_lags()
        k = np.arange(L)[None, :] - np.arange(L)[:, None] + L - 1  # Q[i, j] uses Sigma(j - i)
        per_lag = np.einsum("d,kde->ke", p.v, toep) + np.einsum("kde,e->kd", toep, p.v)
        return per_lag[vec(k)]
    T = cov.sigma_block_toeplitz
    ILv_t = np.kron(np.eye(L), v.T)
    first = np.kron(ILv_t @ T.T, np.eye(L)) @ _dvec_kron_identity(L, 1, D)
    second = np.kron(np.eye(L), ILv_t @ T) @ _dvec_kron_identity(L, D, 1)
    return first + second


def jacobian_r(p: ProjectionPair, cov: LagCovSet, materialize: bool | None = None) -> np.ndarray:
    """``dr = J_r (dv; dw)``; shape ``(2L, 2D)``."""
    L, D = cov.L, cov.D
    if not _use_materialized(cov, materialize):
        Dl = cov.diag_lags()
        J = np.zeros((2 * L, 2 * D))
        J[:L, :D] = jacobian_q(p, cov, materialize=False)
        J[L:, :D] = Dl @ p.w
        J[L:, D:] = p.v @ Dl
        return J
    v, w = p.v[:, None], p.w[:, None]
    S2 = np.kron(np.eye(2), cov.sigma_block_diag)
    ones = np.ones((L, 1))
    stacked = np.vstack([np.kron(ones, v), np.kron(ones, w)])
    first = np.kron(stacked.T @ S2.T, np.eye(2 * L)) @ _dvec_kron_identity(2 * L, 1, D)
    first = np.hstack([first, np.zeros((2 * L, D))])
    onesI = np.kron(ones, np.eye(D))
    zero = np.zeros_like(onesI)
    second = np.kron(np.eye(2 * L), v.T) @ S2 @ np.block([[onesI, zero], [zero, onesI]])
    return first + second


def jacobian_R(p: ProjectionPair, cov: LagCovSet, materialize: bool | None = None) -> np.ndarray:
    """``vec dR = J_R (dv; dw)``; shape ``(4L^2, 2D)``."""
    L, D = cov.L, cov.D
    if not _use_materialized(cov, materialize):
        toep = cov.toeplitz_lags()
        U = (p.v, p.w)
        J = np.zeros((2 * L, 2 * L, 2 * D))
        k = np.arange(L)[None, :] - np.arange(L)[:, None] + L - 1
        for a in range(2):
            for b in range(2):
                # R[(a,i),(b,j)] = u_a^T Sigma(j-i) u_b
                blk = np.s_[a * L:(a + 1) * L, b * L:(b + 1) * L]
                J[blk + (np.s_[a * D:(a + 1) * D],)] += (toep @ U[b])[k]
                J[blk + (np.s_[b * D:(b + 1) * D],)] += (U[a] @ toep)[k]
        return J.transpose(1, 0, 2).reshape(4 * L * L, 2 * D)
    v, w = p.v[:, None], p.w[:, None]
    IL = np.eye(L)
    T2 = np.kron(np.eye(2), cov.sigma_block_toeplitz)
    zero = np.zeros((L * D, L))
    right = np.block([[np.kron(IL, v), zero], [zero, np.kron(IL, w)]])
    left = np.vstack([np.kron(np.ones((1, 2)), np.kron(IL, v.T)),
                      np.kron(np.ones((1, 2)), np.kron(IL, w.T))])
    # d vec(left): each row block is 1_2^T (x) I_L (x) u^T, then the two
    # blocks are interleaved into the stacked matrix by K_{2LD,2} (x) I_L.
    d_block = np.kron(np.eye(2 * L), commutation_matrix(D, L)) @ np.kron(
        vec(np.kron(np.ones((1, 2)), IL))[:, None], np.eye(D))
    d_left = np.kron(commutation_matrix(2 * L * D, 2), IL) @ np.kron(np.eye(2), d_block)
    first = np.kron((T2 @ right).T, np.eye(2 * L)) @ d_left
    # d vec(right): blockdiag(A, B) = E11 (x) A + E22 (x) B.
    d_right = np.kron(np.eye(2), np.kron(commutation_matrix(L, 2), np.eye(L * D))) @ np.kron(
        selector_4_2(), _dvec_kron_identity(L, D, 1))
    second = np.kron(np.eye(2 * L), left @ T2) @ d_right
    return first + second


# -- gradients ------------------------------------------------------------


def _lag_weights(a: np.ndarray, b: np.ndarray, L: int) -> np.ndarray:
    """``c[k] = sum_{j - i = k} a_i b_j`` for ``k = -(L-1) .. L-1``."""
    k = np.arange(L)[None, :] - np.arange(L)[:, None] + L - 1
    return np.bincount(k.ravel(), weights=np.outer(a, b).ravel(), minlength=2 * L - 1)


def _structured_gradient(p: ProjectionPair, cov: LagCovSet, s: CausalityStats) -> tuple[np.ndarray, np.ndarray]:
    L = cov.L
    toep, Dl = cov.toeplitz_lags(), cov.diag_lags()
    v, w = p.v, p.w
    h, g = s.h, s.gfull
    g1, g2 = g[:L], g[L:]
    T0v = toep[L - 1] @ v
    Dv = Dl @ v  # (L, D): D_l v
    DTv = v @ Dl  # D_l^T v
    Dw = Dl @ w

    def C(a, b):
        return np.tensordot(_lag_weights(a, b, L), toep, axes=1)

    # gradients of the two MMSEs, using symmetry of Q and R
    d_phi_r_v = 2 * T0v - 2 * h @ (Dv + DTv) + 2 * C(h, h) @ v
    d_phi_f_v = 2 * T0v - 2 * (g1 @ (Dv + DTv) + g2 @ Dw) + 2 * (C(g1, g1) @ v + C(g1, g2) @ w)
    d_phi_f_w = -2 * g2 @ DTv + 2 * (C(g2, g1) @ v + C(g2, g2) @ w)
    a, b = s.phi_f / s.phi_r ** 2, 1.0 / s.phi_r
    grad_v = a * d_phi_r_v - b * d_phi_f_v
    grad_w = -b * d_phi_f_w
    return grad_w, grad_v


def analytic_gradient(p: ProjectionPair, cov: LagCovSet, materialize: bool | None = None,
                      stats: CausalityStats | None = None) -> GradientResult:
    """Closed-form gradient of the (unclamped) strength of causality ``G(w, v)``.

    With ``materialize=None`` small problems (``L * D <= MATERIALIZE_MAX_LD``)
    are assembled from the explicit Kronecker-form Jacobians and larger ones
    from the structured block evaluation; pass a bool to force either.
    """
    s = latent_stats(p, cov) if stats is None else stats
    if s.pinv_fallback:
        raise np.linalg.LinAlgError("Q or R is singular; regularize the covariances")
    if not _use_materialized(cov, materialize):
        grad_w, grad_v = _structured_gradient(p, cov, s)
        return GradientResult(grad_w, grad_v, "analytic")
    D = cov.D
    h, g = s.h, s.gfull
    Jq, JQ = jacobian_q(p, cov, True), jacobian_Q(p, cov, True)
    Jr, JR = jacobian_r(p, cov, True), jacobian_R(p, cov, True)
    phi_f, phi_r = s.phi_f, s.phi_r
    top = (-2 * s.g_raw / phi_r) * (cov.sigma0 @ p.v) \
        - (2 * phi_f / phi_r ** 2) * (Jq.T @ h) \
        + (phi_f / phi_r ** 2) * (JQ.T @ vec(np.outer(h, h)))
    grad = (2 / phi_r) * (Jr.T @ g) - (1 / phi_r) * (JR.T @ vec(np.outer(g, g)))
    grad[:D] += top
    return GradientResult(grad[D:], grad[:D], "analytic")


def finite_diff_gradient(p: ProjectionPair, cov: LagCovSet, h: float = 1e-6, fn=None) -> GradientResult:
    """Central differences of ``fn(pair)`` on every coordinate of ``w`` and ``v``.

    The step for coordinate ``x`` is ``h * max(1, |x|)``.  ``fn`` defaults to
    the unclamped forward strength of causality.
    """
    if h <= 0:
        raise ValueError("step must be positive")
    if fn is None:
        def fn(pair):
            return latent_stats(pair, cov).g_raw

    def partials(which):
        base = getattr(p, which)
        out = np.empty_like(base)
        for i in range(base.shape[0]):
            step = h * max(1.0, abs(base[i]))
            hi, lo = base.copy(), base.copy()
            hi[i] += step
            lo[i] -= step
            args_hi = {"w": p.w, "v": p.v, which: hi}
            args_lo = {"w": p.w, "v": p.v, which: lo}
            out[i] = (fn(ProjectionPair(**args_hi)) - fn(ProjectionPair(**args_lo))) / (2 * step)
        return out

    return GradientResult(partials("w"), partials("v"), "finite_difference")


def combined_gradient(p: ProjectionPair, cov: LagCovSet, cov_rev: LagCovSet | None = None,
                      method: str = "analytic", h: float = 1e-6, materialize: bool | None = None) -> GradientResult:
    """Gradient of ``G(w, v) + Gtr(v, w)``.

    The reversed term is the forward gradient with roles swapped, evaluated on
    the transposed (time-reversed) covariances.
    """
    cov_rev = cov.reversed() if cov_rev is None else cov_rev
    if method == "analytic":
        fwd = analytic_gradient(p, cov, materialize)
        rev = analytic_gradient(p.swapped(), cov_rev, materialize).swapped()
        return fwd + rev
    if method == "finite_difference":
        def fn(pair):
            return latent_stats(pair, cov).g_raw + latent_stats(pair.swapped(), cov_rev).g_raw
        return finite_diff_gradient(p, cov, h, fn)
    raise ValueError(f"unknown gradient method {method!r}")


def _random_instance(rng: np.random.Generator, dims: int, lags: int, n_samples: int):
    # channels with distinct AR(1) colouring, then mixed, so every lag carries structure
    e = rng.standard_normal((dims, n_samples + 100))
    poles = rng.uniform(-0.8, 0.8, size=dims)
    s = np.stack([lfilter([1.0], [1.0, -a], row) for a, row in zip(poles, e)])[:, 100:]
    x = rng.standard_normal((dims, dims)) @ s
    cov = lag_covariance_set(x, lags)
    pair = ProjectionPair(rng.standard_normal(dims), rng.standard_normal(dims)).normalized()
    return pair, cov


def gradient_check(dims: int = 4, lags: int = 3, trials: int = 100, seed=0, n_samples: int = 500,
                   h: float = 1e-6) -> np.ndarray:
    """Relative L2 error of the closed-form gradient against central differences.

    Each trial draws a random coloured, mixed record and a random filter
    pair; the returned array has one error per trial.
    """
    rng = np.random.default_rng(seed)
    errs = np.empty(trials)
    for t in range(trials):
        pair, cov = _random_instance(rng, dims, lags, n_samples)
        a = analytic_gradient(pair, cov)
        f = finite_diff_gradient(pair, cov, h)
        ga = np.concatenate([a.grad_w, a.grad_v])
        gf = np.concatenate([f.grad_w, f.grad_v])
        errs[t] = np.linalg.norm(ga - gf) / max(np.linalg.norm(gf), np.finfo(float).tiny)
    return errs
