"""Command-line driver: run / condition / verify."""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np


def _limit_threads():
    cap = os.environ.get("SKELPRE_THREADS")
    if not cap:
        return
    try:
        n = max(1, int(cap))
    except ValueError:
        print(f"ignoring malformed SKELPRE_THREADS={cap!r}", file=sys.stderr)
        return
    import threadpoolctl

    threadpoolctl.threadpool_limits(n)


def _read_config(path):
    from .config import parse_config

    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def _write_out(text, out):
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _cmd_run(args):
    from .experiment import emit_table, manufactured_study, run_experiment

    cfg = _read_config(args.config)
    if args.manufactured:
        text = manufactured_study(cfg)
    else:
        rows = run_experiment(cfg)
        text = emit_table(rows, args.format)
        for r in rows:
            if r.failed:
                print(f"level {r.level} failed: {r.error}", file=sys.stderr)
    _write_out(text, args.out or cfg.output)
    return 0


def _cmd_condition(args):
    from .experiment import condition_study, emit_condition_table

    cfg = _read_config(args.config)
    rows = condition_study(cfg)
    skipped = set(cfg.levels) - {r.level for r in rows}
    if skipped:
        print(
            f"skipped levels over the dense-oracle cap: {sorted(skipped)}",
            file=sys.stderr,
        )
    _write_out(emit_condition_table(rows), args.out or cfg.output)
    return 0


def _cmd_verify(_args):
    """Oracle cross-checks: condensation vs monolithic elimination, and the
    four-way lowest-order equivalence."""
    from .linalg import dense_eig_extents
    from .mesh import build_hierarchy
    from .methods import assemble_cr, assemble_schur, method_spec
    from .oracle import cr_shape_assembly, monolithic_hdg
    from .skeleton import build_space

    failures = 0

    def check(name, ok):
        nonlocal failures
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
        failures += 0 if ok else 1

    hier = build_hierarchy("square", 2)
    t1, t2 = hier.levels[1], hier.levels[2]

    for family in ("hdg1", "hdg2", "hdg3", "hdg4"):
        for k in (0, 1):
            if family == "hdg2" and k == 0:
                continue
            spec = method_spec(family, k)
            space = build_space(t1, k)
            D, _ = assemble_schur(t1, space, spec)
            mono = monolithic_hdg(t1, spec, space=space)
            num = np.linalg.norm(D.to_dense() - mono.schur.to_dense())
            den = np.linalg.norm(mono.schur.to_dense())
            check(f"schur matches monolithic ({family}, k={k})", num <= 1e-10 * den)

    space2 = build_space(t2, 0)
    mats = {}
    for family in ("hdg1", "hdg4", "wg1", "cr"):
        spec = method_spec(family, 0)
        D, _ = assemble_schur(t2, space2, spec)
        mats[family] = D.to_dense()
    scale = np.abs(mats["hdg1"]).max()
    ok = all(
        np.abs(mats[f] - mats["hdg1"]).max() <= 1e-10 * scale
        for f in ("hdg4", "wg1", "cr")
    )
    check("four-way equivalence at k=0", ok)

    D_cr, _ = assemble_cr(t2, space2, None)
    D_shape, _ = cr_shape_assembly(t2)
    check(
        "face-mean assembly matches shape-function assembly",
        np.abs(D_cr.to_dense() - D_shape.to_dense()).max() <= 1e-10 * scale,
    )

    lo, hi = dense_eig_extents(mats["hdg1"])
    check("condensed system is SPD", lo > 0)

    print("verify:", "ok" if failures == 0 else f"{failures} failure(s)")
    return 0 if failures == 0 else 1


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="skelpre",
        description="Skeleton-system preconditioning experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a configured experiment table")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--format", choices=("csv", "markdown"), default="csv")
    p_run.add_argument("--out", default=None)
    p_run.add_argument(
        "--manufactured", action="store_true",
        help="run the manufactured-solution convergence study instead",
    )
    p_run.set_defaults(func=_cmd_run)

    p_cond = sub.add_parser("condition", help="dense conditioning study")
    p_cond.add_argument("--config", required=True)
    p_cond.add_argument("--out", default=None)
    p_cond.set_defaults(func=_cmd_condition)

    p_verify = sub.add_parser("verify", help="run the oracle cross-checks")
    p_verify.set_defaults(func=_cmd_verify)

    args = parser.parse_args(argv)
    _limit_threads()
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
