"""Command-line interface.

Every command writes ``bundle.json`` and CSV sidecars to ``--out`` (see
:mod:`latentgc.io` for the layout).  Exit status is 0 on success, 1 on a
runtime failure (diagnostic on stderr) and 2 on invalid usage.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import asdict
from importlib.metadata import PackageNotFoundError, version

import numpy as np

from .causality import pairwise_causality_matrix
from .gradient import gradient_check
from .io import PreprocessSpec, ResultBundle, data_hash, load_csv, preprocess
from .optimizer import OptimizerConfig, decompose
from .simulator import benchmark_config, run_benchmark
from .stats import surrogate_test

log = logging.getLogger("latentgc")


def _version() -> str:
    try:
        return version("latentgc")
    except PackageNotFoundError:
        return "unknown"


def _cond_limit(text: str) -> float:
    try:
        c = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number or 'inf', got {text!r}") from None
    if not c > 1:
        raise argparse.ArgumentTypeError("condition limit must exceed 1")
    return c


def _positive_int(text: str) -> int:
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return n


def _add_input(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", required=True, help="wide CSV: header of channel labels, one row per sample")
    p.add_argument("--standardize", action="store_true", help="unit variance per channel")
    p.add_argument("--remove-global-trend", action="store_true",
                   help="regress the cross-channel mean out of every channel")
    p.add_argument("--downsample", type=_positive_int, default=1, metavar="K",
                   help="keep the first sample of every block of K")
    p.add_argument("--interpolate-gaps", action="store_true", help="fill empty/NaN cells linearly")


def _add_decompose(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lags", type=_positive_int, default=3)
    p.add_argument("--pairs", type=_positive_int, default=1)
    p.add_argument("--cond-limit", type=_cond_limit, default=np.inf, metavar="C|inf")
    p.add_argument("--restarts", type=_positive_int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--gradient", choices=("analytic", "finite_difference"), default="finite_difference")
    p.add_argument("--window", choices=("valid", "full"), default="valid")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="latentgc", description="Latent Granger-causal component analysis")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run the three-source VAR(3) benchmark")
    p.add_argument("--realizations", type=_positive_int, default=100)
    p.add_argument("--samples", type=_positive_int, default=5000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--restarts", type=_positive_int, default=1)
    p.add_argument("--workers", type=_positive_int, default=1)
    p.add_argument("--out", required=True)

    p = sub.add_parser("decompose", help="extract causal component pairs")
    _add_input(p)
    _add_decompose(p)
    p.add_argument("--report-on-original", action="store_true",
                   help="compute components and forward models on the undeflated data")
    p.add_argument("--out", required=True)

    p = sub.add_parser("causality-matrix", help="pairwise strength of causality between channels")
    _add_input(p)
    p.add_argument("--lags", type=_positive_int, default=3)
    p.add_argument("--window", choices=("valid", "full"), default="valid")
    p.add_argument("--out", required=True)

    p = sub.add_parser("surrogate-test", help="phase-randomized significance test of a decomposition")
    _add_input(p)
    _add_decompose(p)
    p.add_argument("--n-surrogates", type=_positive_int, default=199)
    p.add_argument("--workers", type=_positive_int, default=1)
    p.add_argument("--out", required=True)

    p = sub.add_parser("gradcheck", help="closed-form gradient against finite differences")
    p.add_argument("--dims", type=_positive_int, default=4)
    p.add_argument("--lags", type=_positive_int, default=3)
    p.add_argument("--trials", type=_positive_int, default=100)
    p.add_argument("--tolerance", type=float, default=1e-5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    return parser


def _load(args) -> tuple[object, PreprocessSpec, str]:
    raw = load_csv(args.input)
    spec = PreprocessSpec(args.standardize, args.remove_global_trend, args.downsample, args.interpolate_gaps)
    x = preprocess(raw, spec)
    if not np.all(np.isfinite(x.data)):
        raise ValueError("input has gaps; pass --interpolate-gaps")
    return x, spec, data_hash(raw)


def _config(args) -> OptimizerConfig:
    return OptimizerConfig(lags=args.lags, pairs=args.pairs, cond_limit=args.cond_limit,
                           restarts=args.restarts, seed=args.seed, gradient=args.gradient,
                           window=args.window, report_on_original=getattr(args, "report_on_original", False))


def _provenance(args, input_hash=None) -> dict:
    return {"version": _version(), "seed": getattr(args, "seed", None), "input": getattr(args, "input", None),
            "input_sha256": input_hash, "argv": sys.argv[1:]}


def _run(args) -> int:
    if args.command == "simulate":
        cfg = benchmark_config(restarts=args.restarts)
        report = run_benchmark(args.realizations, cfg, args.seed, args.samples, workers=args.workers,
                               progress=lambda i, n: log.info("realization %d/%d", i, n))
        bundle = ResultBundle("simulate", _provenance(args), cfg.to_dict(), benchmark=report)
        bundle.write(args.out)
        for name, (mean, sem) in report.summary().items():
            print(f"{name:20s} {mean:.4f} +/- {sem:.4f}")
        if report.failures:
            print(f"{len(report.failures)} realization(s) failed", file=sys.stderr)
            return 1
        return 0

    if args.command == "gradcheck":
        errs = gradient_check(args.dims, args.lags, args.trials, args.seed)
        worst = float(errs.max())
        print(f"max relative error {worst:.3e} over {args.trials} trials (tolerance {args.tolerance:g})")
        if args.out:
            bundle = ResultBundle("gradcheck", _provenance(args),
                                  {"dims": args.dims, "lags": args.lags, "trials": args.trials,
                                   "tolerance": args.tolerance},
                                  causality={})
            bundle.config["relative_errors"] = errs.tolist()
            bundle.write(args.out)
        return 0 if worst < args.tolerance else 1

    x, spec, h = _load(args)
    if args.command == "causality-matrix":
        m = pairwise_causality_matrix(x, args.lags, args.window)
        bundle = ResultBundle("causality-matrix", _provenance(args, h), {"lags": args.lags, "window": args.window},
                              asdict(spec), causality={"observed": (x.labels, m)})
        bundle.write(args.out)
        i, j = np.unravel_index(np.argmax(m), m.shape)
        print(f"max G = {m[i, j]:.4f} ({x.labels[i]} -> {x.labels[j]})")
        return 0

    cfg = _config(args)
    dec = decompose(x, cfg)
    causality = {"observed": (x.labels, pairwise_causality_matrix(x, cfg.lags, cfg.window))}
    if dec.pairs:
        causality["components"] = (dec.component_labels(), dec.causality_matrix())
    result = None
    if args.command == "surrogate-test":
        result = surrogate_test(x, cfg, args.n_surrogates, args.seed, observed=dec, workers=args.workers)
    bundle = ResultBundle(args.command, _provenance(args, h), cfg.to_dict(), asdict(spec),
                          decomposition=dec, causality=causality, surrogate_test=result)
    bundle.write(args.out)
    for k, p in enumerate(dec.pairs, start=1):
        line = f"pair {k}: G = {p.g_forward:.4f}, Gtr = {p.g_reversed:.4f}, outer iterations {p.trace.outer_iters}"
        if result is not None:
            line += f", p = {result.p_value[k - 1]:.4g}"
        print(line)
    if dec.error:
        print(f"decomposition stopped early: {dec.error}", file=sys.stderr)
        return 1
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return _run(args)
    except (OSError, ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"latentgc {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
