"""Lagged covariance estimation and the block structures built from it.

Two estimation windows are supported:

``"valid"``
    Sums run over ``t = L+1 .. T`` for every lag with divisor ``T - L``, so
    that every lag sees the same number of products.
``"full"``
    The series is treated as zero outside ``1 .. T`` and every available
    product is summed (divisor ``T``).  This is the windowing that makes the
    block Toeplitz matrix the exact Gram matrix of a zero-padded lag
    regression, which is what the explicit-regression oracles rely on.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "MultiSeries",
    "LagCovSet",
    "center",
    "estimate_lagged_covariance",
    "estimate_lagged_covariances",
    "assemble_block_matrices",
    "regularize_condition_number",
    "lag_covariance_set",
]

WINDOWS = ("valid", "full")


@dataclass(frozen=True)
class MultiSeries:
    """A D-channel, T-sample real-valued record.

    ``data`` has shape ``(D, T)``.  Labels default to ``x1 .. xD``.
    """

    data: np.ndarray
    labels: tuple[str, ...] = ()
    sample_step: float | None = None

    def __post_init__(self):
        data = np.array(self.data, dtype=float)
        if data.ndim != 2:
            raise ValueError(f"data must be 2-D (channels x samples), got shape {data.shape}")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        labels = tuple(str(s) for s in self.labels) or tuple(f"x{i + 1}" for i in range(data.shape[0]))
        if len(labels) != data.shape[0]:
            raise ValueError(f"{len(labels)} labels for {data.shape[0]} channels")
        object.__setattr__(self, "labels", labels)

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    def with_data(self, data: np.ndarray) -> "MultiSeries":
        return MultiSeries(data, self.labels, self.sample_step)

    def check_finite(self) -> None:
        if not np.all(np.isfinite(self.data)):
            raise ValueError("series contains NaN or Inf values")


def _as_array(x) -> np.ndarray:
    if isinstance(x, MultiSeries):
        return x.data
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    return x


def center(x):
    """Remove the per-channel sample mean."""
    if isinstance(x, MultiSeries):
        return x.with_data(x.data - x.data.mean(axis=1, keepdims=True))
    x = np.asarray(x, dtype=float)
    return x - x.mean(axis=-1, keepdims=True)


def estimate_lagged_covariance(x, tau: int, L: int, window: str = "valid") -> np.ndarray:
    """Estimate ``Sigma(tau) = E{x(t) x(t - tau)^T}`` from a centered record.

    Parameters
    ----------
    x : MultiSeries or ndarray, shape (D, T)
        Mean-centered observations.
    tau : int
        Lag in samples, ``0 <= tau <= L``.
    L : int
        Maximum lag of the analysis; fixes the summation window.
    window : {"valid", "full"}
        Estimation window, see the module docstring.
    """
    X = _as_array(x)
    T = X.shape[1]
    if L < 0 or not 0 <= tau <= L:
        raise ValueError(f"lag {tau} outside [0, {L}]")
    if T - L < 2:
        raise ValueError(f"insufficient samples: T={T} for maximum lag L={L}")
    if window == "valid":
        m = X[:, L:] @ X[:, L - tau:T - tau].T / (T - L)
    elif window == "full":
        m = X[:, tau:] @ X[:, :T - tau].T / T
    else:
        raise ValueError(f"unknown window {window!r}; expected one of {WINDOWS}")
    if tau == 0:
        m = 0.5 * (m + m.T)
    return m


def estimate_lagged_covariances(x, L: int, window: str = "valid") -> list[np.ndarray]:
    """``[Sigma(0), ..., Sigma(L)]`` with a shared window."""
    return [estimate_lagged_covariance(x, tau, L, window) for tau in range(L + 1)]


def _lag_block(sigmas: Sequence[np.ndarray], k: int) -> np.ndarray:
    # Sigma(-k) is stored as Sigma(k)^T
    return sigmas[k] if k >= 0 else sigmas[-k].T


def assemble_block_matrices(sigmas: Sequence[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Build the block-diagonal and block-Toeplitz lag matrices.

    Returns ``(S, T)`` where ``S = blockdiag(Sigma(1), ..., Sigma(L))`` and
    ``T`` has ``(i, j)`` block ``Sigma(j - i) = E{x(t-i) x(t-j)^T}``, i.e. the
    covariance of the stacked past ``(x(t-1); ...; x(t-L))``.
    """
    sigmas = [np.asarray(s, dtype=float) for s in sigmas]
    if len(sigmas) < 2:
        raise ValueError("need Sigma(0..L) with L >= 1")
    D = sigmas[0].shape[0]
    for s in sigmas:
        if s.shape != (D, D):
            raise ValueError(f"shape mismatch: expected {(D, D)}, got {s.shape}")
    L = len(sigmas) - 1
    S = np.zeros((L * D, L * D))
    T = np.empty((L * D, L * D))
    for i in range(L):
        S[i * D:(i + 1) * D, i * D:(i + 1) * D] = sigmas[i + 1]
        for j in range(L):
            T[i * D:(i + 1) * D, j * D:(j + 1) * D] = _lag_block(sigmas, j - i)
    return S, T


def regularize_condition_number(m: np.ndarray, c: float) -> tuple[np.ndarray, float]:
    """Add ``s * I`` so that the condition number of ``m`` is at most ``c``.

    Symmetric matrices use eigenvalues and the ridge
    ``s = (l_max - c * l_min) / (c - 1)``, which makes the condition number
    exactly ``c``.  For non-symmetric matrices the same formula is applied to
    singular values; since a diagonal shift does not move singular values
    rigidly, the ridge is then enlarged (doubling, then bisection) until the
    condition number no longer exceeds ``c``.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"matrix must be square, got shape {m.shape}")
    if not c > 1:
        raise ValueError(f"condition limit must exceed 1, got {c}")
    if np.isinf(c):
        return m, 0.0
    symmetric = np.allclose(m, m.T, rtol=1e-12, atol=1e-14 * max(1.0, np.abs(m).max(initial=0.0)))
    if symmetric:
        lam = np.linalg.eigvalsh(0.5 * (m + m.T))
        lmax, lmin = lam[-1], max(lam[0], 0.0)
    else:
        sv = np.linalg.svd(m, compute_uv=False)
        lmax, lmin = sv[0], sv[-1]
    if lmax <= 0 or (lmin > 0 and lmax / lmin <= c):
        return m, 0.0
    ridge = (lmax - lmin * c) / (c - 1)
    eye = np.eye(m.shape[0])
    if symmetric:
        return m + ridge * eye, float(ridge)

    def cond(s):
        return np.linalg.cond(m + s * eye)

    if cond(ridge) > c:
        lo, hi = ridge, 2 * ridge
        while cond(hi) > c:
            lo, hi = hi, 2 * hi
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if cond(mid) > c:
                lo = mid
            else:
                hi = mid
        ridge = hi
    return m + ridge * eye, float(ridge)


def _block_transpose(m: np.ndarray, D: int) -> np.ndarray:
    n = m.shape[0] // D
    b = m.reshape(n, D, n, D)
    return b.transpose(0, 3, 2, 1).reshape(m.shape)


@dataclass(frozen=True)
class LagCovSet:
    """Lagged covariances of a record and the (regularized) block matrices.

    ``sigma`` holds the raw estimates ``Sigma(0..L)``; the two block matrices
    include any ridge added by condition-number regularization.  All
    downstream quantities read the block matrices, so a congruence transform
    or time reversal only needs to touch those.
    """

    sigma: tuple[np.ndarray, ...]
    sigma_block_diag: np.ndarray
    sigma_block_toeplitz: np.ndarray
    cond_limit: float = np.inf
    ridge_diag: float = 0.0
    ridge_toeplitz: float = 0.0
    window: str = "valid"
    _lags: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        for a in (self.sigma_block_diag, self.sigma_block_toeplitz, *self.sigma):
            a.setflags(write=False)

    @property
    def L(self) -> int:
        return len(self.sigma) - 1

    @property
    def D(self) -> int:
        return self.sigma[0].shape[0]

    @property
    def sigma0(self) -> np.ndarray:
        """Lag-zero covariance as seen by the (regularized) Toeplitz matrix."""
        return self.sigma_block_toeplitz[:self.D, :self.D]

    def toeplitz_lags(self) -> np.ndarray:
        """``(2L-1, D, D)`` stack of ``Sigma(k)``, ``k = -(L-1) .. L-1``, from the Toeplitz matrix."""
        if "toep" not in self._lags:
            D, L = self.D, self.L
            row = self.sigma_block_toeplitz[:D].reshape(D, L, D).transpose(1, 0, 2)  # Sigma(j), j=0..L-1
            col = self.sigma_block_toeplitz[:, :D].reshape(L, D, D)  # Sigma(-i) = Sigma(i)^T
            self._lags["toep"] = np.concatenate([col[:0:-1], row], axis=0)
        return self._lags["toep"]

    def diag_lags(self) -> np.ndarray:
        """``(L, D, D)`` stack of the diagonal blocks of the block-diagonal matrix."""
        if "diag" not in self._lags:
            D, L = self.D, self.L
            b = self.sigma_block_diag.reshape(L, D, L, D)
            self._lags["diag"] = np.stack([b[i, :, i, :] for i in range(L)])
        return self._lags["diag"]

    def reversed(self) -> "LagCovSet":
        """Covariances of the time-reversed process, ``Sigma_rev(tau) = Sigma(tau)^T``."""
        D = self.D
        return LagCovSet(
            tuple(s.T.copy() for s in self.sigma),
            _block_transpose(self.sigma_block_diag, D),
            _block_transpose(self.sigma_block_toeplitz, D),
            self.cond_limit, self.ridge_diag, self.ridge_toeplitz, self.window,
        )

    def congruence(self, W: np.ndarray) -> "LagCovSet":
        """Covariances of ``W^T x`` for a ``D x r`` transform ``W``."""
        W = np.asarray(W, dtype=float)
        big = np.kron(np.eye(self.L), W)
        return LagCovSet(
            tuple(W.T @ s @ W for s in self.sigma),
            big.T @ self.sigma_block_diag @ big,
            big.T @ self.sigma_block_toeplitz @ big,
            self.cond_limit, self.ridge_diag, self.ridge_toeplitz, self.window,
        )


def lag_covariance_set(x, L: int, cond_limit: float = np.inf, window: str = "valid") -> LagCovSet:
    """Estimate, assemble and regularize everything the objective needs.

    ``x`` is centered here; passing already-centered data is harmless.
    """
    if L < 1:
        raise ValueError(f"maximum lag must be >= 1, got {L}")
    X = center(_as_array(x))
    sigmas = estimate_lagged_covariances(X, L, window)
    S, T = assemble_block_matrices(sigmas)
    S_reg, ridge_s = regularize_condition_number(S, cond_limit)
    T_reg, ridge_t = regularize_condition_number(T, cond_limit)
    T_reg = 0.5 * (T_reg + T_reg.T)
    return LagCovSet(tuple(sigmas), S_reg, T_reg, float(cond_limit), ridge_s, ridge_t, window)
