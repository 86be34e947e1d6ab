"""surfkin: kinetic and diffusion models for gas transport in thin surface layers.

The package covers a hierarchy of models for particles moving along a solid
surface while bouncing in a confining normal potential:

* ``potential_geometry`` -- confining/corrugation potentials and the orbit
  geometry (bounce times, collision cross-sections) they induce.
* ``equilibrium_collision`` -- discrete velocity/energy grids, the surface
  collision operator and its equilibrium fixed point, and the friction table.
* ``kinetic_solvers`` -- transport-splitting solvers for the trapped-gas,
  two-group, two-layer channel, homogenized mesoscopic, and fine-corrugation
  kinetic models.
* ``diffusion_solvers`` -- drift-diffusion limits (isothermal, nonisothermal,
  and coupled two-layer) plus the transport coefficients that feed them.
* ``hierarchy_harness`` -- convergence studies linking the levels of the
  hierarchy (diffusion limit, homogenization, layer-exchange regimes).
* ``cli_io`` -- config-file driven command line front end with CSV and raw
  binary snapshot output.

Numerics use a compiled sweep core when the extension is available and fall
back to pure NumPy otherwise; see ``surfkin.backend.backend_name()``.
"""

from .errors import (
    SurfkinError,
    DomainError,
    RootError,
    QuadratureError,
    GridMismatch,
    CFLViolation,
    StabilityError,
    NonConvergence,
    ResolutionError,
    ParseError,
    ValidationError,
)
from .potential_geometry import (
    QuadratureSpec,
    TurningPoints,
    NormalPotential,
    TangentialPotential,
    gauss_segment,
    composite_nodes,
)
from .equilibrium_collision import (
    VelocityGrid,
    EnergyGrid,
    CollisionOperator,
    MesoCollisionOperator,
    GammaTable,
    kernel_khat,
    kernel_row_mass,
    picard_kernel_solve,
)
from .kinetic_solvers import (
    CosineTilt,
    PhaseGrid,
    KineticState,
    MesoState,
    FineState,
    AmbientBoundary,
    TrappedKineticSolver,
    TwoGroupSolver,
    ChannelSolver,
    MesoSolver,
    FineTangentialSolver,
    positivity_guard,
)
from .diffusion_solvers import (
    TransportCoefficients,
    DiffusionState,
    CoupledState,
    IsoDiffusionSolver,
    NonIsoDiffusionSolver,
    CoupledDiffusionSolver,
)
from .hierarchy_harness import (
    ConvergenceReport,
    DiffusionLimitScenario,
    HomogenizationScenario,
    CouplingScenario,
    RegimeDiagnostics,
    compare_densities,
    average_to_blocks,
    estimate_orders,
    run_diffusion_limit_study,
    run_homogenization_study,
    run_coupling_regime_study,
)
from .backend import backend_name
from .cli_io import ScenarioConfig, UnitScales, parse_config, run_scenario, main

__version__ = "0.1.0"

__all__ = [
    "SurfkinError", "DomainError", "RootError", "QuadratureError",
    "GridMismatch", "CFLViolation", "StabilityError", "NonConvergence",
    "ResolutionError", "ParseError", "ValidationError",
    "QuadratureSpec", "TurningPoints", "NormalPotential",
    "TangentialPotential", "gauss_segment", "composite_nodes",
    "VelocityGrid", "EnergyGrid", "CollisionOperator",
    "MesoCollisionOperator", "GammaTable", "kernel_khat",
    "kernel_row_mass", "picard_kernel_solve",
    "CosineTilt", "PhaseGrid", "KineticState", "MesoState", "FineState",
    "AmbientBoundary", "TrappedKineticSolver", "TwoGroupSolver",
    "ChannelSolver", "MesoSolver", "FineTangentialSolver",
    "positivity_guard",
    "TransportCoefficients", "DiffusionState", "CoupledState",
    "IsoDiffusionSolver", "NonIsoDiffusionSolver", "CoupledDiffusionSolver",
    "ConvergenceReport", "DiffusionLimitScenario", "HomogenizationScenario",
    "CouplingScenario", "RegimeDiagnostics", "compare_densities",
    "average_to_blocks", "estimate_orders", "run_diffusion_limit_study",
    "run_homogenization_study", "run_coupling_regime_study",
    "backend_name",
    "ScenarioConfig", "UnitScales", "parse_config", "run_scenario", "main",
    "__version__",
]
