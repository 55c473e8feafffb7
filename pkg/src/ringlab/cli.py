"""Command-line entry point: ``ringlab {profile,run,analyze,sweep,classify}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .config import ConfigError, parse_config, parse_sweep
from .grid import RingLabError
from .output import (
    EXIT_CODES,
    EXIT_CONFIG_ERROR,
    EXIT_FAILURE,
    profile_to_directory,
    resolve_output,
    run_sweep,
    run_to_directory,
)
from .profile import NoConvergenceError, ShootingConfig

log = logging.getLogger("ringlab")


def _cmd_profile(args) -> int:
    try:
        cfg = ShootingConfig(xi_max=args.xi_max, tolerance=args.tol)
    except ValueError as exc:
        raise ConfigError("xi_max", str(exc)) from None
    out = resolve_output(args.out, f"profile_sigma{args.sigma:g}")
    try:
        rec = profile_to_directory(args.sigma, out, cfg)
    except NoConvergenceError as exc:
        log.error("%s", exc)
        return EXIT_FAILURE
    print(json.dumps(rec, indent=2))
    return 0


def _cmd_run(args) -> int:
    rc = parse_config(args.config)
    out = resolve_output(args.out, Path(args.config).stem)

    def progress(t, inv, rm, regrids):
        log.info("t=%.10g  1/L=%.6g  r_max=%.8g  regrids=%d", t, inv, rm, regrids)

    res = run_to_directory(rc, out, dump_grids=args.dump_grids, progress=progress if args.verbose else None)
    print(f"{res.termination.value}: 1/L={res.series.inv_L[-1]:.6g} r_max={res.series.r_max[-1]:.8g} "
          f"steps={res.steps} regrids={res.regrids} -> {out}")
    return EXIT_CODES[res.termination]


def _cmd_analyze(args) -> int:
    from .report import analyze_directory

    series = Path(args.series)
    out = Path(args.out) if args.out else series.parent / "analysis"
    res = analyze_directory(series, Path(args.snapshots) if args.snapshots else None, out,
                            args.family, args.sigma, args.d, args.m, figures=not args.no_figures)
    keys = ("tc", "kappa", "p", "rate_limit", "gamma", "r_max_final", "admissible_profile_distance", "heat_profile_distance")
    print(json.dumps({k: res.get(k) for k in keys}, indent=2))
    return 0


def _cmd_sweep(args) -> int:
    spec = parse_sweep(args.spec, threads=args.threads)
    out = resolve_output(args.out, Path(args.spec).stem)
    path = run_sweep(spec, out)
    print(path)
    return 0


def _cmd_classify(args) -> int:
    from .analysis import classify_ring

    c = classify_ring(args.sigma, args.d, args.family)
    print(json.dumps({"alpha": c.alpha, "regime": c.regime, "p": c.p, "expanding_forbidden": c.expanding_forbidden}, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ringlab", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("profile", help="compute the admissible self-similar profile")
    sp.add_argument("--sigma", type=float, required=True)
    sp.add_argument("--xi-max", type=float, default=30.0)
    sp.add_argument("--tol", type=float, default=1e-6)
    sp.add_argument("--out")
    sp.set_defaults(func=_cmd_profile)

    sp = sub.add_parser("run", help="simulate one config")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out")
    sp.add_argument("--dump-grids", action="store_true")
    sp.set_defaults(func=_cmd_run)

    sp = sub.add_parser("analyze", help="fit rates and rescale profiles of a finished run")
    sp.add_argument("--series", required=True)
    sp.add_argument("--snapshots")
    sp.add_argument("--out")
    sp.add_argument("--family")
    sp.add_argument("--sigma", type=float)
    sp.add_argument("--d", type=int)
    sp.add_argument("--m", type=int)
    sp.add_argument("--no-figures", action="store_true")
    sp.set_defaults(func=_cmd_analyze)

    sp = sub.add_parser("sweep", help="run a Cartesian sweep of configs")
    sp.add_argument("--spec", required=True)
    sp.add_argument("--threads", type=int)
    sp.add_argument("--out")
    sp.set_defaults(func=_cmd_sweep)

    sp = sub.add_parser("classify", help="ring regime and predicted rate for (sigma, d)")
    sp.add_argument("--sigma", type=float, required=True)
    sp.add_argument("--d", type=int, required=True)
    sp.add_argument("--family", default="NLS", choices=["NLS", "BNLS"])
    sp.set_defaults(func=_cmd_classify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except (RingLabError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
