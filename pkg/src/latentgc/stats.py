"""Significance of recovered causality by phase-randomized surrogates."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .covariance import MultiSeries
from .optimizer import OptimizerConfig, decompose

__all__ = ["SurrogateTestResult", "phase_randomize", "surrogate_p_value", "surrogate_test"]

log = logging.getLogger(__name__)


@dataclass
class SurrogateTestResult:
    """Observed strengths, null samples and p-values, one entry per pair.

    ``null_samples[k]`` holds the strength of pair ``k`` on every surrogate
    that produced such a pair, ordered by surrogate index.
    """

    observed_g: np.ndarray
    null_samples: list[np.ndarray]
    p_value: np.ndarray
    n_surrogates: int
    n_failed: int = 0

    def to_dict(self) -> dict:
        return {
            "observed_g": self.observed_g.tolist(),
            "p_value": self.p_value.tolist(),
            "n_surrogates": self.n_surrogates,
            "n_failed": self.n_failed,
            "null_samples": [s.tolist() for s in self.null_samples],
        }


def phase_randomize(x, seed=None):
    """Surrogate with each channel's amplitude spectrum and random phases.

    Phases are drawn independently per channel, so lagged dependence
    between channels is destroyed while each channel keeps its power
    spectrum, mean and autocorrelation.  The DC bin and, for even length,
    the Nyquist bin are left untouched so the output stays real.
    """
    data = x.data if isinstance(x, MultiSeries) else np.atleast_2d(np.asarray(x, dtype=float))
    T = data.shape[1]
    if T < 4:
        raise ValueError(f"need at least 4 samples, got {T}")
    rng = np.random.default_rng(seed)
    F = np.fft.rfft(data, axis=1)
    phases = np.exp(2j * np.pi * rng.uniform(size=F.shape))
    phases[:, 0] = 1.0
    if T % 2 == 0:
        phases[:, -1] = 1.0
    out = np.fft.irfft(F * phases, n=T, axis=1)
    return x.with_data(out) if isinstance(x, MultiSeries) else out


def surrogate_p_value(observed: float, null) -> float:
    """``(#{null >= observed} + 1) / (n + 1)``."""
    null = np.asarray(null, dtype=float)
    return float((np.count_nonzero(null >= observed) + 1) / (null.size + 1))


def _surrogate_strengths(args) -> list[float] | None:
    x, cfg, seed = args
    try:
        d = decompose(phase_randomize(x, seed), cfg)
    except Exception as exc:  # noqa: BLE001 - failures are counted, not fatal
        log.warning("surrogate failed: %s", exc)
        return None
    return [p.g_forward for p in d.pairs]


def surrogate_test(x, cfg: OptimizerConfig, n_surrogates: int, seed=None,
                   observed=None, workers: int = 1) -> SurrogateTestResult:
    """Compare recovered strengths with those recovered from surrogates.

    The full decomposition is re-run on every surrogate with ``cfg``.  Pass
    ``observed`` (a :class:`Decomposition` of ``x``) to avoid recomputing
    it.  ``workers > 1`` distributes surrogates over processes; results do
    not depend on the number of workers.
    """
    if n_surrogates < 1:
        raise ValueError("need at least one surrogate")
    series = x if isinstance(x, MultiSeries) else MultiSeries(x)
    obs = decompose(series, cfg) if observed is None else observed
    g_obs = np.array([p.g_forward for p in obs.pairs])
    seeds = np.random.SeedSequence(seed).spawn(n_surrogates)
    jobs = [(series, cfg, s) for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_surrogate_strengths, jobs))
    else:
        results = [_surrogate_strengths(j) for j in jobs]
    n_failed = sum(r is None for r in results)
    null = [np.array([r[k] for r in results if r is not None and len(r) > k]) for k in range(g_obs.size)]
    p = np.array([surrogate_p_value(g, n) for g, n in zip(g_obs, null)])
    return SurrogateTestResult(g_obs, null, p, n_surrogates, n_failed)
