"""Removal of an extracted driving signal and its lags from the observations."""

from __future__ import annotations

import numpy as np

from .covariance import MultiSeries

__all__ = ["build_lag_matrix", "removal_basis", "deflate", "deflation_projector"]


def build_lag_matrix(y, L: int) -> np.ndarray:
    """``L x T`` matrix whose row ``l`` (1-based) is ``y(t - l)``, zero-padded on the left.

    >>> build_lag_matrix([1, 2, 3, 4], 2)
    array([[0., 1., 2., 3.],
           [0., 0., 1., 2.]])
    """
    y = np.asarray(y, dtype=float).ravel()
    T = y.shape[0]
    if L < 1:
        raise ValueError(f"number of lags must be >= 1, got {L}")
    if L >= T:
        raise ValueError(f"number of lags {L} must be smaller than the series length {T}")
    Y = np.zeros((L, T))
    for l in range(1, L + 1):
        Y[l - 1, l:] = y[:T - l]
    return Y


def removal_basis(y, L: int, include_lag0: bool = True, intercept: bool = True) -> np.ndarray:
    """Rows spanning everything that deflation removes.

    A constant row is included by default so that the residual is also
    mean-free, which turns the orthogonality of the projection into zero
    sample correlation.
    """
    y = np.asarray(y, dtype=float).ravel()
    rows = [build_lag_matrix(y, L)]
    if include_lag0:
        rows.insert(0, y[None, :])
    if intercept:
        rows.insert(0, np.ones((1, y.shape[0])))
    return np.vstack(rows)


def deflate(x, y, L: int, include_lag0: bool = True, intercept: bool = True):
    """Regress ``y`` and its lags out of every channel of ``x``.

    Computes ``X (I - B^+ B)`` for the removal basis ``B`` by least squares,
    without forming the ``T x T`` projector.  Rank-deficient bases are
    handled as with the pseudo-inverse.
    """
    X = x.data if isinstance(x, MultiSeries) else np.asarray(x, dtype=float)
    B = removal_basis(y, L, include_lag0, intercept)
    if B.shape[1] != X.shape[1]:
        raise ValueError(f"driving series has {B.shape[1]} samples, data has {X.shape[1]}")
    coef, *_ = np.linalg.lstsq(B.T, X.T, rcond=None)
    residual = X - (B.T @ coef).T
    return x.with_data(residual) if isinstance(x, MultiSeries) else residual


def deflation_projector(y, L: int, include_lag0: bool = True, intercept: bool = True) -> np.ndarray:
    """Explicit ``T x T`` projector ``I - B^+ B``; for checks on short series."""
    B = removal_basis(y, L, include_lag0, intercept)
    return np.eye(B.shape[1]) - np.linalg.pinv(B) @ B
