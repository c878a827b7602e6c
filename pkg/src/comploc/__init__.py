"""Numerical lab for compliance-optimal placement of Dirichlet ball obstacles."""

__version__ = "0.1.0"

from .balls import (
    BallConfig,
    EmpiricalMeasure,
    admissible,
    boundary_cover,
    cell_constant,
    empirical_measure,
    homogenize,
    lattice_config,
    project,
)
from .errors import (
    ComplocError,
    ConfigError,
    ConvergenceError,
    DomainMismatchError,
    InfeasibleError,
    ResolutionError,
    SingularSystemError,
)
from .distances import histogram_l1, w1_atoms_vs_density
from .grids import DIRICHLET, NEUMANN, Domain, ScalarField, integrate
from .limit import (
    DensityMeasure,
    LimitSolution,
    evaluate_F,
    exact_oned_gfunction,
    oned_limit_exact,
    oned_theta_exact,
    solve_limit,
    subdiff_inverse,
)
from .placement import (
    OptimizationTrace,
    OptimizerSettings,
    optimize,
    scaled_compliance,
    translation_gradient,
)
from .poisson import (
    ObstacleMask,
    SolveStats,
    boundary_mask,
    compliance,
    dirichlet_energy,
    normal_flux,
    rasterize,
    solve_poisson,
)
from .theta import (
    GFunction,
    ResolutionRule,
    ThetaSample,
    ThetaTable,
    build_g,
    envelopes,
    estimate_theta,
    lower_bound,
    t1_estimate,
    theta_derivative_bound,
    upper_bound_neumann,
)

__all__ = [name for name in dir() if not name.startswith("_")]
