"""Entry point of the ``condinf`` command.

Every subcommand reads an optional JSON config, applies the common flags,
validates the result, runs the experiment, writes its CSV outputs and a
``manifest.json`` describing the run into the output directory.

Exit codes: 0 success, 1 configuration error, 2 numerical failure,
3 failed oracle check.
"""

from __future__ import annotations

import argparse
import datetime
import json
import logging
import os
import sys
import tempfile
import time

from .. import __version__
from ..exceptions import ConfigError, CondInfError
from .config import SCHEMAS, load_config
from .experiments import EXPERIMENTS, RunContext

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_ORACLE = 0, 1, 2, 3

log = logging.getLogger("condinf")

_HELP = {
    "sufficiency-scan": "proxy log-likelihood of one dataset across a sweep of a sufficient parameter",
    "rao-blackwell": "variance of raw and Rao-Blackwellised estimators against the run length",
    "mc-test": "one conditional and/or bootstrap Monte Carlo test on a simulated dataset",
    "power": "rejection frequencies of the Monte Carlo tests over a parameter grid",
    "condmle-profile": "conditional and unconditional likelihood profiles for several Newton-Raphson starts",
    "oracle-check": "compare the proxy with exact conditional laws and cumulants with finite differences",
}


def _u64(text):
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="condinf", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SCHEMAS:
        p = sub.add_parser(name, help=_HELP[name], description=_HELP[name])
        p.add_argument("--config", help="JSON config file (defaults to the built-in reference scenario)")
        p.add_argument("--seed", type=_u64, help="override the config seed")
        p.add_argument("--out", default=None, help="output directory (default: ./out/<subcommand>)")
        p.add_argument("--jobs", type=_positive, default=None,
                       help="worker processes for independent replicates (default: all CPUs)")
        p.add_argument("--k", type=_positive, default=None, help="override the run length k")
        p.add_argument("--quiet", action="store_true", help="only report errors")
    return parser


def _atomic_write(path, text):
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO, format="%(levelname)s: %(message)s")
    overrides = {"seed": args.seed}
    if args.k is not None:
        overrides["k"] = args.k
    try:
        cfg = load_config(args.command, args.config, overrides)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG

    out_dir = args.out or os.path.join("out", args.command)
    jobs = args.jobs or os.cpu_count() or 1
    ctx = RunContext(jobs=jobs)
    started = datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")
    t0 = time.perf_counter()
    try:
        outputs = EXPERIMENTS[args.command](cfg, ctx)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except CondInfError as exc:
        log.error("numerical failure: %s: %s", type(exc).__name__, exc)
        return EXIT_NUMERICAL
    wall = time.perf_counter() - t0

    os.makedirs(out_dir, exist_ok=True)
    for name, text in sorted(outputs.items()):
        _atomic_write(os.path.join(out_dir, name), text)
    manifest = {
        "command": args.command,
        "config": cfg,
        "code_version": __version__,
        "started": started,
        "wall_time_s": round(wall, 3),
        "jobs": jobs,
        "outputs": sorted(outputs),
        "counters": ctx.counters,
        "warnings": ctx.warnings,
    }
    _atomic_write(os.path.join(out_dir, "manifest.json"), json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    for w in ctx.warnings:
        log.warning("%s", w)
    log.info("wrote %d file(s) to %s in %.1f s", len(outputs), out_dir, wall)
    if ctx.counters.get("oracle_failures"):
        log.error("%d oracle check(s) failed", ctx.counters["oracle_failures"])
        return EXIT_ORACLE
    return EXIT_OK


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
