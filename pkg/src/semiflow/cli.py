"""Command line entry point.

    semiflow run CONFIG [--out DIR]
    semiflow verify SUITE|CONFIG|RUN_DIR [--seeds N] [--json PATH]
    semiflow converge CONFIG --ladder KEY=v1,v2,... [--times t1,t2] [--out FILE]

Exit status: 0 all checks pass, 1 a check failed, 2 bad configuration or
usage, 3 numerical failure.  ``SEMIFLOW_THREADS`` sets the number of
threads used by the pairwise force loop.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .config import ConfigError, load_config
from .integrators import NumericalError
from .report import CheckReport
from .runner import (
    MANIFEST,
    ArtifactError,
    convergence_study,
    dump_json,
    execute,
    ladder_csv,
    parse_ladder,
    report_dict,
    run,
    verify_run_dir,
)
from .suites import DEFAULT_SEEDS, SUITES, run_suite

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("semiflow")


def _print_checks(checks: list[CheckReport]) -> None:
    for c in checks:
        log.info(c.line())


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    out = Path(args.out) if args.out else None
    if out is None and cfg.output_dir is None:
        raise ConfigError("no output directory: set output.dir in the config or pass --out")
    result, paths = run(cfg, out)
    _print_checks(result.checks)
    for name, path in paths.items():
        log.info("wrote %s", path)
    return EXIT_OK if result.passed else EXIT_FAIL


def _verify_target(target: str, seeds: int) -> tuple[str, list[CheckReport]]:
    path = Path(target)
    if target in SUITES or target == "all":
        return "suite", run_suite(target, seeds)
    if path.is_dir():
        if not (path / MANIFEST).is_file():
            raise ConfigError(f"{target}: directory has no {MANIFEST}")
        return "run-dir", verify_run_dir(path)
    if path.is_file() and path.suffix in (".yaml", ".yml"):
        return "config", execute(load_config(path)).checks
    if path.is_file() and (path.parent / MANIFEST).is_file():
        return "run-dir", verify_run_dir(path.parent)
    raise ConfigError(f"unknown suite or path {target!r}; suites: {sorted(SUITES) + ['all']}")


def cmd_verify(args) -> int:
    try:
        mode, checks = _verify_target(args.target, args.seeds)
    except ArtifactError as exc:
        log.error("artifact check failed: %s", exc)
        checks = [CheckReport("artifacts_readable", float("inf"), 0.0, {"error": str(exc)})]
        mode = "run-dir"
    text = dump_json(report_dict(checks, target=args.target, mode=mode))
    if args.json:
        Path(args.json).write_text(text)
    else:
        sys.stdout.write(text)
    _print_checks([c for c in checks if not c.passed])
    failed = sum(not c.passed for c in checks)
    log.info("%d/%d checks passed", len(checks) - failed, len(checks))
    return EXIT_OK if failed == 0 else EXIT_FAIL


def cmd_converge(args) -> int:
    cfg = load_config(args.config)
    try:
        key, values = parse_ladder(args.ladder)
        times = [float(t) for t in args.times.split(",")] if args.times else None
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    rows = convergence_study(cfg, key, values, times)
    text = ladder_csv(rows)
    if args.out:
        Path(args.out).write_text(text)
        log.info("wrote %s", args.out)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="semiflow", description="Semiconvex particle and Galerkin dynamics with invariant checks")
    parser.add_argument("--version", action="version", version=f"semiflow {__version__}")
    parser.add_argument("-q", "--quiet", action="store_true", help="only print errors")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one scenario and write its artifacts")
    p.add_argument("config", help="scenario YAML file")
    p.add_argument("--out", help="output directory (overrides output.dir)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("verify", help="run an invariant suite, a config, or re-check a run directory")
    p.add_argument("target", help=f"suite ({', '.join(sorted(SUITES))}, all), scenario YAML, or run directory")
    p.add_argument("--seeds", type=int, default=DEFAULT_SEEDS, help="seeded runs per suite (default %(default)s)")
    p.add_argument("--json", help="write the JSON report here instead of stdout")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("converge", help="distances between runs along a resolution ladder")
    p.add_argument("config", help="scenario YAML file")
    p.add_argument("--ladder", required=True, help="KEY=v1,v2,... with KEY in N, dt, modes")
    p.add_argument("--times", help="comma-separated comparison times (default: T)")
    p.add_argument("--out", help="CSV output path (default stdout)")
    p.set_defaults(func=cmd_converge)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO, format="%(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (ConfigError, KeyError) as exc:
        log.error("configuration error: %s", exc.args[0] if exc.args else exc)
        return EXIT_CONFIG
    except NumericalError as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    except ValueError as exc:
        log.error("invalid input: %s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
