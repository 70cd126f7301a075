"""Body-attitude BGK model on SO(3): equilibria, gradient flow, particles and macroscopic coefficients"""
from .config import Settings, get_settings, load_settings
from .equilibria import classify, critical_densities, phase_diagram, solve_c1_branches, solve_c2_branches
from .errors import (
    CriticalDensityError,
    IntegrationError,
    MatrixParseError,
    NumericalError,
    PreconditionError,
    SamplingError,
)
from .flow import FluxPath, Trajectory, basin_label, duhamel_density, free_energy, integrate, relax_flux
from .hydro import alpha_of_rho, coefficient_table, diffusion_coefficient, gci_residual, sohb_coefficients
from .models import (
    BasinLabel,
    CoefficientRow,
    CriticalDensities,
    EquilibriumKind,
    EquilibriumRecord,
    Estimate,
    FlowOptions,
    QuadratureConfig,
    RunConfig,
)
from .particles import Ensemble, FluxSeries, compare_meanfield, init_ensemble, run
from .so3 import haar_sample, polar_rotation, ssvd
from .vonmises import VonMisesParams, c1, c2, log_partition, sample

__version__ = "0.1.0"

__all__ = [
    "Settings",
    "get_settings",
    "load_settings",
    "classify",
    "critical_densities",
    "phase_diagram",
    "solve_c1_branches",
    "solve_c2_branches",
    "CriticalDensityError",
    "IntegrationError",
    "MatrixParseError",
    "NumericalError",
    "PreconditionError",
    "SamplingError",
    "FluxPath",
    "Trajectory",
    "basin_label",
    "duhamel_density",
    "free_energy",
    "integrate",
    "relax_flux",
    "alpha_of_rho",
    "coefficient_table",
    "diffusion_coefficient",
    "gci_residual",
    "sohb_coefficients",
    "BasinLabel",
    "CoefficientRow",
    "CriticalDensities",
    "EquilibriumKind",
    "EquilibriumRecord",
    "Estimate",
    "FlowOptions",
    "QuadratureConfig",
    "RunConfig",
    "Ensemble",
    "FluxSeries",
    "compare_meanfield",
    "init_ensemble",
    "run",
    "haar_sample",
    "polar_rotation",
    "ssvd",
    "VonMisesParams",
    "c1",
    "c2",
    "log_partition",
    "sample",
]
