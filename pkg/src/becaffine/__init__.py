"""Affine (scaling) description of condensate dynamics in time dependent
rotating harmonic traps: matrix scaling flow, center-of-mass transport,
closed-form strong-coupling evolution, adapted-frame grid dynamics and
scenario orchestration."""

__version__ = "0.1.0"

from .affine import (
    AdaptiveState,
    CanonicalState,
    DerivedMatrices,
    LambdaTrajectory,
    analytic_lambda_isotropic,
    angmom_lambda,
    canonical_map,
    canonical_unmap,
    energy_lambda,
    integrate_lambda,
    integrate_sigma_c,
    longtime_coefficients,
    sigma_and_c,
)
from .com import ComState, ComTrajectory, com_trajectory, integrate_com
from .gpe import (
    FieldState,
    Grid2D,
    PropagationLog,
    bures_distance,
    from_lab_frame,
    ground_state_imaginary_time,
    momentum_distribution,
    principal_angle,
    propagate_real,
    to_lab_frame,
)
from .gridio import read_grid, write_grid
from .runner import ScenarioConfig, parse_config, run_scenario, verify_run
from .thomas_fermi import (
    TFModel,
    TFSnapshot,
    chemical_potential_tf,
    integrated_density,
    tf_density,
    tf_energy,
    tf_phase,
    tf_wavefunction,
)
from .trap import RotationSchedule, TrapConfig, TrapSchedule

__all__ = [
    "AdaptiveState", "CanonicalState", "DerivedMatrices", "LambdaTrajectory",
    "analytic_lambda_isotropic", "angmom_lambda", "canonical_map",
    "canonical_unmap", "energy_lambda", "integrate_lambda", "integrate_sigma_c",
    "longtime_coefficients", "sigma_and_c",
    "ComState", "ComTrajectory", "com_trajectory", "integrate_com",
    "FieldState", "Grid2D", "PropagationLog", "bures_distance",
    "from_lab_frame", "ground_state_imaginary_time", "momentum_distribution",
    "principal_angle", "propagate_real", "to_lab_frame",
    "read_grid", "write_grid",
    "ScenarioConfig", "parse_config", "run_scenario", "verify_run",
    "TFModel", "TFSnapshot", "chemical_potential_tf", "integrated_density",
    "tf_density", "tf_energy", "tf_phase", "tf_wavefunction",
    "RotationSchedule", "TrapConfig", "TrapSchedule",
    "__version__",
]
