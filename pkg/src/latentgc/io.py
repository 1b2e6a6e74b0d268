"""CSV ingestion, preprocessing and result serialization.

CSV files are wide: a header row of channel labels, then one row per time
sample.  Empty cells and ``NaN`` mark gaps.

A result bundle is one JSON document (``bundle.json``) plus flat CSV files
for plotting:

``components.csv``
    one column per recovered signal ``y1, z1, y2, z2, ...``
``filters.csv``
    one row per input channel; columns ``w1, v1, a_w1, a_v1, ...`` hold the
    spatial filters and forward models
``causality_<name>.csv``
    square strength-of-causality matrices, rows driving columns
``benchmark.csv``
    one row per benchmark realization

The JSON document has the keys ``schema``, ``command``, ``provenance``
(input hash, seed, package version), ``config``, ``preprocess`` and, when
present, ``decomposition``, ``causality``, ``surrogate_test`` and
``benchmark``.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .covariance import MultiSeries

__all__ = [
    "PreprocessSpec",
    "ResultBundle",
    "load_csv",
    "write_csv",
    "preprocess",
    "interpolate_gaps",
    "remove_global_trend",
    "standardize",
    "downsample",
    "data_hash",
    "SCHEMA_VERSION",
]

SCHEMA_VERSION = 1
GAP_MARKERS = {"", "nan", "NaN", "NAN"}


def _parse_cell(cell: str, row: int, col: int) -> float:
    cell = cell.strip()
    if cell in GAP_MARKERS:
        return math.nan
    try:
        value = float(cell)
    except ValueError:
        raise ValueError(f"non-numeric cell {cell!r} at data row {row}, column {col}") from None
    return value


def load_csv(path, delimiter: str = ",", interpolate: bool = False) -> MultiSeries:
    """Read a wide CSV into a ``channels x samples`` series.

    Gaps stay NaN unless ``interpolate`` is set, in which case they are
    filled as in :func:`interpolate_gaps`.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh, delimiter=delimiter))
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if len(header) < 2:
        raise ValueError(f"{path}: fewer than 2 channels")
    body = rows[1:]
    if not body:
        raise ValueError(f"{path}: no data rows")
    data = np.empty((len(body), len(header)))
    for i, r in enumerate(body):
        if len(r) != len(header):
            raise ValueError(f"{path}: ragged row {i + 1} has {len(r)} cells, header has {len(header)}")
        data[i] = [_parse_cell(c, i + 1, j + 1) for j, c in enumerate(r)]
    series = MultiSeries(data.T, tuple(header))
    return interpolate_gaps(series) if interpolate else series


def write_csv(path, x, labels=None, delimiter: str = ",") -> None:
    """Write ``x`` (series or ``channels x samples`` array) in wide format.

    Values are written with ``repr`` so that reading them back is exact.
    """
    if isinstance(x, MultiSeries):
        data, labels = x.data, labels or x.labels
    else:
        data = np.atleast_2d(np.asarray(x, dtype=float))
        labels = labels or tuple(f"x{i + 1}" for i in range(data.shape[0]))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter=delimiter)
        w.writerow(labels)
        for row in data.T:
            w.writerow(["NaN" if np.isnan(v) else repr(float(v)) for v in row])


# ---------------------------------------------------------------- preprocessing

@dataclass(frozen=True)
class PreprocessSpec:
    """Preprocessing steps, applied in field order; centering runs last."""

    standardize: bool = False
    remove_global_trend: bool = False
    downsample_factor: int = 1
    interpolate_gaps: bool = False
    center: bool = True

    def __post_init__(self):
        if self.downsample_factor < 1:
            raise ValueError(f"downsample factor must be >= 1, got {self.downsample_factor}")


def standardize(x: np.ndarray) -> np.ndarray:
    """Zero mean, unit (population) standard deviation per channel; NaN-aware."""
    mu = np.nanmean(x, axis=1, keepdims=True)
    sd = np.nanstd(x, axis=1, keepdims=True)
    if np.any(~(sd > 0)):
        bad = np.flatnonzero(~(sd.ravel() > 0)).tolist()
        raise ValueError(f"zero-variance channel(s) {bad} cannot be standardized")
    return (x - mu) / sd


def remove_global_trend(x: np.ndarray) -> np.ndarray:
    """Residuals of each channel regressed (with intercept) on the cross-channel mean."""
    g = np.nanmean(x, axis=0)
    out = np.full_like(x, np.nan)
    for i, row in enumerate(x):
        ok = np.isfinite(row) & np.isfinite(g)
        B = np.column_stack([np.ones(ok.sum()), g[ok]])
        coef, *_ = np.linalg.lstsq(B, row[ok], rcond=None)
        out[i, ok] = row[ok] - B @ coef
    return out


def downsample(x: np.ndarray, factor: int) -> np.ndarray:
    """First sample of each block of ``factor`` samples.

    >>> downsample(np.array([[1.0, 2.0, 3.0, 4.0]]), 2)
    array([[1., 3.]])
    """
    return x[:, ::factor]


def interpolate_gaps(x):
    """Fill NaN samples linearly from the nearest valid neighbours.

    Leading and trailing gaps take the nearest valid value.  A channel with
    no valid samples is an error.
    """
    data = x.data if isinstance(x, MultiSeries) else np.asarray(x, dtype=float)
    out = data.copy()
    t = np.arange(data.shape[1])
    for i, row in enumerate(data):
        ok = np.isfinite(row)
        if not ok.any():
            raise ValueError(f"channel {i} has no valid samples")
        if not ok.all():
            out[i, ~ok] = np.interp(t[~ok], t[ok], row[ok])
    return x.with_data(out) if isinstance(x, MultiSeries) else out


def preprocess(x: MultiSeries, spec: PreprocessSpec) -> MultiSeries:
    """Apply ``spec`` to ``x``."""
    data = np.array(x.data, dtype=float)
    if spec.standardize:
        data = standardize(data)
    if spec.remove_global_trend:
        data = remove_global_trend(data)
    if spec.downsample_factor > 1:
        data = downsample(data, spec.downsample_factor)
    if spec.interpolate_gaps:
        data = interpolate_gaps(data)
    if spec.center:
        data = data - np.nanmean(data, axis=1, keepdims=True)
    step = x.sample_step * spec.downsample_factor if x.sample_step else x.sample_step
    return MultiSeries(data, x.labels, step)


# ---------------------------------------------------------------- bundles

def data_hash(x) -> str:
    """SHA-256 of the raw float64 samples (and shape)."""
    data = x.data if isinstance(x, MultiSeries) else np.asarray(x, dtype=float)
    h = hashlib.sha256(str(data.shape).encode())
    h.update(np.ascontiguousarray(data, dtype=np.float64).tobytes())
    return h.hexdigest()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


@dataclass
class ResultBundle:
    """Everything a command produced, plus what is needed to reproduce it."""

    command: str
    provenance: dict
    config: dict = field(default_factory=dict)
    preprocess: dict = field(default_factory=dict)
    decomposition: object = None
    causality: dict = field(default_factory=dict)
    surrogate_test: object = None
    benchmark: object = None

    def to_dict(self) -> dict:
        out = {"schema": SCHEMA_VERSION, "command": self.command, "provenance": self.provenance,
               "config": self.config, "preprocess": self.preprocess}
        if self.decomposition is not None:
            out["decomposition"] = _decomposition_dict(self.decomposition)
        if self.causality:
            out["causality"] = {k: {"labels": list(lab), "matrix": m}
                                for k, (lab, m) in self.causality.items()}
        if self.surrogate_test is not None:
            out["surrogate_test"] = self.surrogate_test.to_dict()
        if self.benchmark is not None:
            out["benchmark"] = self.benchmark.to_dict()
        return _jsonable(out)

    def write(self, out_dir) -> list[Path]:
        """Write ``bundle.json`` and the CSV sidecars; returns the paths written."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = [out / "bundle.json"]
        written[0].write_text(json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n")
        dec = self.decomposition
        if dec is not None and dec.pairs:
            p = out / "components.csv"
            write_csv(p, dec.components(), dec.component_labels())
            written.append(p)
            p = out / "filters.csv"
            _write_filters(p, dec)
            written.append(p)
        for name, (labels, m) in self.causality.items():
            p = out / f"causality_{name}.csv"
            _write_matrix(p, labels, m)
            written.append(p)
        if self.benchmark is not None and self.benchmark.rows:
            p = out / "benchmark.csv"
            _write_rows(p, self.benchmark.rows)
            written.append(p)
        return written


def _decomposition_dict(dec) -> dict:
    return {
        "config": dec.config.to_dict(),
        "channels": list(dec.data.labels) if dec.data is not None else None,
        "deflation_ranks": dec.deflation_ranks,
        "error": dec.error,
        "pairs": [
            {
                "w": p.pair.w, "v": p.pair.v,
                "g_forward": p.g_forward, "g_reversed": p.g_reversed,
                "forward_model_w": p.forward_model_w, "forward_model_v": p.forward_model_v,
                "trace": p.trace.to_dict(),
            }
            for p in dec.pairs
        ],
    }


def _write_filters(path, dec) -> None:
    labels = dec.data.labels if dec.data is not None else tuple(f"x{i + 1}" for i in range(dec.pairs[0].pair.w.size))
    cols, names = [], []
    for k, p in enumerate(dec.pairs, start=1):
        cols += [p.pair.w, p.pair.v, p.forward_model_w, p.forward_model_v]
        names += [f"w{k}", f"v{k}", f"a_w{k}", f"a_v{k}"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["channel", *names])
        for i, lab in enumerate(labels):
            w.writerow([lab, *(repr(float(c[i])) for c in cols)])


def _write_matrix(path, labels, m) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["driver", *labels])
        for lab, row in zip(labels, np.asarray(m)):
            w.writerow([lab, *(repr(float(v)) for v in row)])


def _write_rows(path, rows: list[dict]) -> None:
    keys = [k for k in rows[0] if not isinstance(rows[0][k], (list, dict))]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: r.get(k) for k in keys})


def preprocess_dict(spec: PreprocessSpec) -> dict:
    return asdict(spec)
