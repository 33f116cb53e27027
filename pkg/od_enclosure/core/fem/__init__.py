"""P1 finite elements: meshes, assembly and the Dirichlet-to-Neumann maps."""
from od_enclosure.core.fem.mesh import Mesh, MeshError, generate_mesh
from od_enclosure.core.fem.solve import (
    DirichletSolver,
    DNPair,
    EigenvalueGuardError,
    ForwardModel,
    boundary_pairing,
    dn_apply,
    eigenvalue_guard,
    solve_dirichlet,
    synthesize_dn_pair,
)

__all__ = (
    "DNPair",
    "DirichletSolver",
    "EigenvalueGuardError",
    "ForwardModel",
    "Mesh",
    "MeshError",
    "boundary_pairing",
    "dn_apply",
    "eigenvalue_guard",
    "generate_mesh",
    "solve_dirichlet",
    "synthesize_dn_pair",
)
