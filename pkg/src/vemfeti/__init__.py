"""Lowest-order virtual elements on polyhedral meshes with a FETI-DP solver."""

from .errors import (
    ConformityError,
    DegenerateGeometryError,
    EmptyPrimalSpaceError,
    IndefiniteOperatorError,
    MeshError,
    NonConvergenceError,
    NumericalError,
    ParseError,
    SpdError,
    UnsupportedFeatureError,
    UsageError,
    VemFetiError,
)
from .mesh import (
    MeshQuality,
    PolyMesh,
    generate_cube_grid,
    generate_truncated_octahedra,
    mesh_quality,
    read_polymesh,
    write_polymesh,
)
from .vem import assemble, assemble_full, solve_direct
from .decomp import (
    classify_interface,
    decompose,
    partition_box,
    primal_constraints,
    replicate,
    rho_checkerboard,
    rho_const,
    scaling_weights,
    set_random_load,
    solve_glued,
)
from .fetidp import (
    FetiResult,
    apply_F,
    apply_M,
    designate,
    prepare_operators,
    recover_solution,
    solve_fetidp,
)
from .krylov import Lcg64, PcgReport, pcg

__all__ = [
    "ConformityError",
    "DegenerateGeometryError",
    "EmptyPrimalSpaceError",
    "FetiResult",
    "IndefiniteOperatorError",
    "Lcg64",
    "MeshError",
    "MeshQuality",
    "NonConvergenceError",
    "NumericalError",
    "ParseError",
    "PcgReport",
    "PolyMesh",
    "SpdError",
    "UnsupportedFeatureError",
    "UsageError",
    "VemFetiError",
    "apply_F",
    "apply_M",
    "assemble",
    "assemble_full",
    "classify_interface",
    "decompose",
    "designate",
    "generate_cube_grid",
    "generate_truncated_octahedra",
    "mesh_quality",
    "partition_box",
    "pcg",
    "prepare_operators",
    "primal_constraints",
    "read_polymesh",
    "recover_solution",
    "replicate",
    "rho_checkerboard",
    "rho_const",
    "scaling_weights",
    "set_random_load",
    "solve_direct",
    "solve_fetidp",
    "solve_glued",
    "write_polymesh",
]
