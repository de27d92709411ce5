"""Skeleton-system preconditioning for hybridized diffusion discretizations.

Multiplier (skeleton) SPD systems condensed from HDG, weak Galerkin and
nonconforming P1 discretizations of the 2D diffusion problem, together
with additive multilevel and auxiliary-space preconditioners whose PCG
iteration counts stay flat under refinement.
"""

from .config import ExperimentConfig, parse_config, serialize_config
from .experiment import condition_study, emit_table, run_experiment
from .linalg import (
    LinearOperator,
    PcgReport,
    SparseMatrix,
    csr_from_triplets,
    dense_eig_extents,
    pcg,
    sparse_cholesky_solve,
)
from .mesh import (
    DomainKind,
    Mesh,
    MeshHierarchy,
    build_hierarchy,
    initial_mesh,
    p1_prolongation,
    refine_graded_step,
    refine_uniform,
    skeleton_faces,
)
from .methods import (
    ConstantDiffusion,
    InteriorSolution,
    MethodSpec,
    QuadrantDiffusion,
    assemble_cr,
    assemble_schur,
    method_spec,
    recover_interior,
)
from .precond import (
    AuxPreconditioner,
    BpxPreconditioner,
    apply_aux,
    apply_bpx,
    build_aux,
    build_ph,
    build_pi,
)
from .skeleton import SkeletonSpace, build_space, gram_matrices, norm_h, triple_norm_h

__all__ = [name for name in dir() if not name.startswith("_")]
