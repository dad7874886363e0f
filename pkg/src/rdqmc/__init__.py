"""Quasi-Monte Carlo convergence studies for a semilinear
reaction-diffusion growth model with random coefficients.

The package stacks five layers, each usable on its own:

* :mod:`rdqmc.mesh` / :mod:`rdqmc.assembly` - P1 triangular finite
  elements with canonical sparse patterns;
* :mod:`rdqmc.solver` / :mod:`rdqmc.treatment` - implicit Euler / Newton
  integration of the growth model with therapy forcing;
* :mod:`rdqmc.fields` - uniform-affine and lognormal (truncated
  Karhunen-Loeve) coefficient models;
* :mod:`rdqmc.lattice` / :mod:`rdqmc.estimator` - randomly shifted
  rank-1 lattice rules, CBC construction and deterministic estimators;
* :mod:`rdqmc.harness` / :mod:`rdqmc.cli` - config-driven studies.
"""

from ._version import __version__
from .assembly import (
    AssemblyPattern,
    CoefficientBoundError,
    assemble_load,
    assemble_mass,
    assemble_stiffness,
    assemble_weighted_mass,
    lump_rows,
)
from .estimator import (
    EstimatorResult,
    EvaluationError,
    fit_rate,
    mc_estimate,
    mc_values,
    qmc_estimate,
    qmc_ladder,
)
from .fields import (
    CovarianceSpec,
    KLExpansion,
    LognormalKLModel,
    UniformAffineModel,
    calibrate_covariance,
    compute_kl,
    eval_lognormal,
    eval_uniform,
    load_kl,
    save_kl,
)
from .harness import (
    ConfigError,
    PDEProblem,
    build_problem,
    load_config,
    parse_config_text,
    resolve_config,
    run_cbc,
    run_kl,
    run_single,
    run_study,
)
from .lattice import (
    GeneratingVectorError,
    LatticeRule,
    WeightSequence,
    cbc_construct,
    default_generating_vector,
    euler_totient,
    falling_factorial_half,
    inverse_normal_cdf,
    lattice_point,
    lattice_points,
    load_generating_vector,
    make_rule,
    normal_cdf,
    pod_weights,
    product_weights,
    save_generating_vector,
    wce,
)
from .mesh import (
    Mesh,
    MeshFormatError,
    generate_structured,
    load_mesh,
    save_mesh,
)
from .solver import (
    NewtonDivergenceError,
    SolveResult,
    SolverConfig,
    Stepper,
    apriori_constant,
    gaussian_bump,
    resolve_lambda,
    solve,
    solve_shifted,
    state_integral,
)
from .treatment import (
    ChemotherapySchedule,
    RadiotherapySchedule,
    default_week_protocol,
    eval_f,
    f_max_bound,
)

__all__ = [
    "__version__",
    "AssemblyPattern",
    "ChemotherapySchedule",
    "CoefficientBoundError",
    "ConfigError",
    "CovarianceSpec",
    "EstimatorResult",
    "EvaluationError",
    "GeneratingVectorError",
    "KLExpansion",
    "LatticeRule",
    "LognormalKLModel",
    "Mesh",
    "MeshFormatError",
    "NewtonDivergenceError",
    "PDEProblem",
    "RadiotherapySchedule",
    "SolveResult",
    "SolverConfig",
    "Stepper",
    "UniformAffineModel",
    "WeightSequence",
    "apriori_constant",
    "assemble_load",
    "assemble_mass",
    "assemble_stiffness",
    "assemble_weighted_mass",
    "build_problem",
    "calibrate_covariance",
    "cbc_construct",
    "compute_kl",
    "default_generating_vector",
    "default_week_protocol",
    "euler_totient",
    "eval_f",
    "eval_lognormal",
    "eval_uniform",
    "f_max_bound",
    "falling_factorial_half",
    "fit_rate",
    "gaussian_bump",
    "generate_structured",
    "inverse_normal_cdf",
    "lattice_point",
    "lattice_points",
    "load_config",
    "load_generating_vector",
    "load_kl",
    "load_mesh",
    "lump_rows",
    "make_rule",
    "mc_estimate",
    "mc_values",
    "normal_cdf",
    "parse_config_text",
    "pod_weights",
    "product_weights",
    "qmc_estimate",
    "qmc_ladder",
    "resolve_config",
    "resolve_lambda",
    "run_cbc",
    "run_kl",
    "run_single",
    "run_study",
    "save_generating_vector",
    "save_kl",
    "save_mesh",
    "solve",
    "solve_shifted",
    "state_integral",
    "wce",
]
