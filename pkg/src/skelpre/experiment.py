"""Experiment driver: hierarchy construction, assembly, PCG runs, tables."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .config import ExperimentConfig, validate_config
from .linalg import (
    DivergenceError,
    NoConvergenceError,
    NotSpdError,
    SizeCapError,
    dense_eig_extents,
    pcg,
)
from .mesh import DomainKind, build_hierarchy
from .methods import ConstantDiffusion, QuadrantDiffusion, assemble_schur, method_spec
from .oracle import sin_sin_case
from .precond import BpxPreconditioner, build_aux
from .skeleton import build_space


@dataclass
class ExperimentRow:
    level: int
    dof: int
    iterations: int
    ritz_cond: float
    seconds: float
    failed: bool = False
    error: str = ""


def _domain_kind(cfg):
    return DomainKind(cfg.domain)


def _diffusion(cfg):
    return QuadrantDiffusion() if cfg.domain == "graded" else ConstantDiffusion()


def _preconditioner(cfg, hier, mesh, space, D):
    if cfg.preconditioner == "bpx":
        return BpxPreconditioner.from_hierarchy(hier, space, cfg.prolongation_kind).as_operator()
    return build_aux(
        D, mesh, space, cfg.prolongation_kind, cfg.smoother, cfg.coarse,
        hier=hier, diffusion=_diffusion(cfg),
    ).as_operator()


def run_experiment(cfg: ExperimentConfig):
    """One table: per level build the nested hierarchy prefix, assemble,
    precondition and run PCG with the configured start/right-hand side.
    Failed levels are marked (iterations -1) and the remaining levels run."""
    validate_config(cfg)
    hier = build_hierarchy(_domain_kind(cfg), max(cfg.levels))
    spec = method_spec(cfg.method, cfg.k, diffusion=_diffusion(cfg))
    case = sin_sin_case() if cfg.rhs_rule == "manufactured" else None

    rows = []
    for level in cfg.levels:
        t0 = time.perf_counter()
        try:
            sub = hier.prefix(level)
            mesh = sub.finest
            space = build_space(mesh, cfg.k)
            D, b = assemble_schur(mesh, space, spec, case.f if case else None)
            B = _preconditioner(cfg, sub, mesh, space, D)
            x0 = np.ones(space.dof_count) if cfg.initial_guess == "ones" else None
            _, rep = pcg(D, B, b, x0=x0, reduction=cfg.reduction)
            rows.append(
                ExperimentRow(
                    level, space.dof_count, rep.iterations, rep.ritz_cond,
                    time.perf_counter() - t0,
                )
            )
        except (DivergenceError, NoConvergenceError, NotSpdError, SizeCapError) as exc:
            rows.append(
                ExperimentRow(
                    level, -1, -1, 0.0, time.perf_counter() - t0,
                    failed=True, error=str(exc),
                )
            )
    return rows


def emit_table(rows, fmt="csv"):
    """Serialize rows; csv uses shortest-roundtrip float formatting so a
    re-parse reproduces the values exactly.  The seconds column is
    informational only."""
    if fmt == "csv":
        lines = ["level,dof,iterations,ritz_cond,seconds"]
        for r in rows:
            lines.append(f"{r.level},{r.dof},{r.iterations},{r.ritz_cond!r},{r.seconds:.3f}")
        return "\n".join(lines) + "\n"
    if fmt == "markdown":
        lines = [
            "| level | dof | iterations | ritz_cond | seconds |",
            "| --- | --- | --- | --- | --- |",
        ]
        for r in rows:
            lines.append(
                f"| {r.level} | {r.dof} | {r.iterations} | {r.ritz_cond!r} | {r.seconds:.3f} |"
            )
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown table format {fmt!r}")


def parse_table_csv(text):
    """Inverse of emit_table(fmt='csv')."""
    lines = [l for l in text.splitlines() if l.strip()]
    if not lines or lines[0] != "level,dof,iterations,ritz_cond,seconds":
        raise ValueError("not an experiment csv table")
    rows = []
    for l in lines[1:]:
        level, dof, iters, ritz, sec = l.split(",")
        rows.append(
            ExperimentRow(int(level), int(dof), int(iters), float(ritz), float(sec))
        )
    return rows


@dataclass
class ConditionRow:
    level: int
    dof: int
    kappa_d: float
    kappa_bd: float
    ritz_cond: float


def condition_study(cfg: ExperimentConfig, dense_cap=5000):
    """Dense conditioning study: kappa of the skeleton matrix and of the
    preconditioned operator per level, with the PCG Ritz estimate alongside.
    Levels whose problem size exceeds the dense cap are skipped."""
    validate_config(cfg)
    hier = build_hierarchy(_domain_kind(cfg), max(cfg.levels))
    spec = method_spec(cfg.method, cfg.k, diffusion=_diffusion(cfg))
    rows = []
    for level in cfg.levels:
        sub = hier.prefix(level)
        mesh = sub.finest
        space = build_space(mesh, cfg.k)
        if space.dof_count > dense_cap:
            continue
        D, _ = assemble_schur(mesh, space, spec)
        B = _preconditioner(cfg, sub, mesh, space, D)
        Dd = D.to_dense()
        lo, hi = dense_eig_extents(Dd)
        kappa_d = hi / lo
        Bd = np.column_stack([B.apply(col) for col in np.eye(space.dof_count)])
        lo, hi = dense_eig_extents(Dd @ Bd @ Dd, Dd)
        kappa_bd = hi / lo
        _, rep = pcg(D, B, np.zeros(space.dof_count),
                     x0=np.ones(space.dof_count), reduction=1e-10)
        rows.append(ConditionRow(level, space.dof_count, kappa_d, kappa_bd, rep.ritz_cond))
    return rows


def emit_condition_table(rows):
    lines = ["level,dof,kappa_d,kappa_bd,ritz_cond"]
    for r in rows:
        lines.append(f"{r.level},{r.dof},{r.kappa_d!r},{r.kappa_bd!r},{r.ritz_cond!r}")
    return "\n".join(lines) + "\n"


def manufactured_study(cfg: ExperimentConfig):
    """Convergence study rows (level, h, l2_error) for the configured method."""
    from .oracle import convergence_study

    spec = method_spec(cfg.method, cfg.k, diffusion=_diffusion(cfg))
    if cfg.domain != "square":
        raise ValueError("the manufactured study runs on the square family")
    pairs = convergence_study(sin_sin_case(), spec, list(cfg.levels))
    lines = ["level,h,l2_error"]
    for level, (h, err) in zip(cfg.levels, pairs):
        lines.append(f"{level},{h!r},{err!r}")
    return "\n".join(lines) + "\n"
