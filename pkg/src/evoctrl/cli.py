"""Command line entry point: ``evoctrl run | check | mesh``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .checks import check_suite
from .experiments import ConfigError, load_config, run_experiment
from .fem2d import build_lshape_mesh

EXIT_OK, EXIT_CHECK, EXIT_NONCONVERGED, EXIT_CONFIG = 0, 1, 2, 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="evoctrl",
                                description="LQ optimal control of semidiscretized evolution equations")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="solve an experiment and write its artifacts")
    run.add_argument("config", help="flat 'key = value' config file")
    run.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                     help="override a config key (repeatable)")
    chk = sub.add_parser("check", help="run the invariant suite")
    chk.add_argument("--seed", type=int, default=0)
    mesh = sub.add_parser("mesh", help="export the L-shaped mesh as CSV")
    mesh.add_argument("--n", type=int, required=True, help="squares per unit length")
    mesh.add_argument("--out", required=True, help="output directory")
    return p


def _run(args) -> int:
    try:
        cfg = load_config(args.config, args.set)
        outcome = run_experiment(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    res = outcome.result
    print(f"{cfg.experiment}: cost={res.cost:.12g} stationarity={res.stationarity:.3e} "
          f"iterations={res.iterations} -> {outcome.out_dir}")
    if not res.converged:
        print(f"solver did not converge: {res.message}", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


def _check(args) -> int:
    report = check_suite(args.seed)
    sys.stdout.write(report.text())
    return EXIT_OK if report.passed else EXIT_CHECK


def _mesh(args) -> int:
    try:
        mesh = build_lshape_mesh(args.n)
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    mesh.write_csv(out)
    print(f"mesh n={args.n}: {mesh.nv} vertices, {len(mesh.triangles)} triangles -> {out}")
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"run": _run, "check": _check, "mesh": _mesh}[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
