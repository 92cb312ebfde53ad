"""Command line entry point.

::

    satvct run CONFIG [CONFIG ...] [--preset NAME ...] [--output-dir DIR]
               [--seed N] [--deterministic] [--jobs N]
    satvct presets

Exit codes: 0 success, 2 configuration error, 3 solver failure.  Failures
print one JSON line on stderr, e.g.
``{"status": "error", "kind": "config", "key": "geometry.n_angles", ...}``.
The output directory defaults to ``$SATVCT_OUTPUT_DIR`` and then to the
config's ``experiment.output_dir``; each experiment writes into
``<output dir>/<experiment name>``.
"""
from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .config import ConfigError, load_config, load_preset, preset_names

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3
OUTPUT_ENV = "SATVCT_OUTPUT_DIR"

log = logging.getLogger("satvct")


def _error_line(kind: str, message: str, **extra) -> str:
    return json.dumps({"status": "error", "kind": kind, **extra, "message": message})


def _deterministic_context(enabled: bool):
    """Single-threaded BLAS so floating-point reductions are reproducible."""
    if not enabled:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=1)


def run_one(source: str, is_preset: bool, output_dir: str | None, seed: int | None,
            deterministic: bool) -> int:
    """Load, override and run one experiment; returns the exit code."""
    from .experiment import run_experiment

    try:
        cfg = load_preset(source) if is_preset else load_config(source)
        if seed is not None:
            cfg["experiment"]["seed"] = seed
        if deterministic:
            cfg["experiment"]["deterministic"] = True
    except ConfigError as exc:
        print(_error_line("config", exc.message, key=exc.key, source=source), file=sys.stderr)
        return EXIT_CONFIG
    base = output_dir or os.environ.get(OUTPUT_ENV) or cfg["experiment"]["output_dir"]
    out = Path(base) / cfg.name
    try:
        with _deterministic_context(cfg["experiment"]["deterministic"]):
            result = run_experiment(cfg, out)
    except (ArithmeticError, ValueError, RuntimeError, OSError) as exc:
        print(_error_line("solver", str(exc), source=source, error=type(exc).__name__),
              file=sys.stderr)
        return EXIT_SOLVER
    for method, m in result.metrics.items():
        print(f"{cfg.name}\t{method}\trelative_error={m.relative_error:.4f}")
    print(f"{cfg.name}\tartifacts written to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="satvct", description="CT reconstruction experiments")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run experiments from config files or presets")
    run.add_argument("configs", nargs="*", help="INI config files")
    run.add_argument("--preset", action="append", default=[], metavar="NAME",
                     help="run a shipped preset (repeatable)")
    run.add_argument("--output-dir", help=f"base output directory (overrides ${OUTPUT_ENV})")
    run.add_argument("--seed", type=int, help="override the noise seed")
    run.add_argument("--deterministic", action="store_true",
                     help="force single-threaded reductions")
    run.add_argument("--jobs", type=int, default=1, metavar="N",
                     help="run independent experiments in N processes")
    sub.add_parser("presets", help="list shipped presets")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s", stream=sys.stderr)
    if args.command == "presets":
        print("\n".join(preset_names()))
        return EXIT_OK

    jobs = [(c, False) for c in args.configs] + [(p, True) for p in args.preset]
    if not jobs:
        print(_error_line("config", "no config file or preset given", key="<arguments>"),
              file=sys.stderr)
        return EXIT_CONFIG
    if args.jobs < 1:
        print(_error_line("config", "--jobs must be >= 1", key="--jobs"), file=sys.stderr)
        return EXIT_CONFIG
    common = (args.output_dir, args.seed, args.deterministic)
    if args.jobs == 1 or len(jobs) == 1:
        codes = [run_one(src, pre, *common) for src, pre in jobs]
    else:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futures = [pool.submit(run_one, src, pre, *common) for src, pre in jobs]
            codes = [fut.result() for fut in futures]
    return max(codes)


if __name__ == "__main__":
    sys.exit(main())
