"""Command line entry points.

bec run CONFIG --out DIR [--jobs N]     run any scenario config
bec sweep CONFIG --out DIR [--jobs N]   run a parameter sweep config
bec analytic --d D --omega0 W --tmax T  tabulate the isotropic expansion factor
bec verify DIR                          check a finished run directory
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .affine import analytic_lambda_isotropic
from .gridio import write_csv
from .runner import config_warnings, parse_config, run_scenario, verify_run


def _load_config(path: str):
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise SystemExit(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise SystemExit(f"config file is not valid JSON: {exc}")
    return parse_config(raw)


def _cmd_run(args, require_sweep: bool = False) -> int:
    cfg = _load_config(args.config)
    if require_sweep and cfg.kind != "sweep":
        print(f"error: expected a sweep config, got kind {cfg.kind!r}",
              file=sys.stderr)
        return 1
    for w in config_warnings(cfg):
        print(f"warning: {w}", file=sys.stderr)
    try:
        manifest = run_scenario(cfg, args.out, jobs=args.jobs)
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        print(f"manifest with status 'error' written to {args.out}/manifest.json",
              file=sys.stderr)
        return 1
    print(f"kind: {manifest['kind']}")
    for key, val in manifest["results"].items():
        if isinstance(val, float):
            print(f"  {key}: {val:.9g}")
        elif key == "cells":
            for c in val:
                print(f"  cell eps={c['epsilon']:g} g_n={c['g_n']:g} "
                      f"rate={c['rate_end']:g}: b_rot={c['b_rot_max']:.6g}")
        else:
            print(f"  {key}: {val}")
    n_fail = sum(1 for a in manifest["assertions"] if not a["passed"])
    print(f"self-checks: {len(manifest['assertions']) - n_fail} passed, "
          f"{n_fail} failed")
    print(f"status: {manifest['status']}")
    return 0 if manifest["status"] == "ok" else 1


def _cmd_analytic(args) -> int:
    ts = np.linspace(0.0, args.tmax, args.samples)
    lam = analytic_lambda_isotropic(args.d, args.omega0, ts)
    if args.out:
        write_csv(args.out, ["t", "lambda"], zip(ts, lam))
        print(f"wrote {args.samples} samples to {args.out}")
    else:
        print("t,lambda")
        for t, v in zip(ts, lam):
            print(f"{t!r},{v!r}")
    return 0


def _cmd_verify(args) -> int:
    ok, messages = verify_run(args.dir)
    for m in messages:
        print(m)
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bec",
        description="Affine scaling dynamics of trapped condensates")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario config")
    p_run.add_argument("config", help="JSON scenario description")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--jobs", type=int, default=1,
                       help="parallel workers for sweep cells")

    p_sweep = sub.add_parser("sweep", help="run a parameter sweep config")
    p_sweep.add_argument("config", help="JSON sweep description")
    p_sweep.add_argument("--out", required=True, help="output directory")
    p_sweep.add_argument("--jobs", type=int, default=1,
                         help="parallel workers for sweep cells")

    p_an = sub.add_parser("analytic",
                          help="tabulate the isotropic free-expansion factor")
    p_an.add_argument("--d", type=int, required=True, choices=(1, 2, 3))
    p_an.add_argument("--omega0", type=float, default=1.0)
    p_an.add_argument("--tmax", type=float, required=True)
    p_an.add_argument("--samples", type=int, default=201)
    p_an.add_argument("--out", default=None, help="CSV output path (default: stdout)")

    p_ver = sub.add_parser("verify", help="check a finished run directory")
    p_ver.add_argument("dir", help="run directory containing manifest.json")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "sweep":
            return _cmd_run(args, require_sweep=True)
        if args.command == "analytic":
            return _cmd_analytic(args)
        if args.command == "verify":
            return _cmd_verify(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 2


if __name__ == "__main__":
    sys.exit(main())
