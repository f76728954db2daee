"""Oscillation-energy based siting of damping actuators under wind uncertainty."""

from .errors import (
    DefectiveMatrix,
    DimensionMismatch,
    IslandedNetwork,
    ModeMatchingAmbiguous,
    NoOscillatoryMode,
    NonConvergence,
    OscsiteError,
    ParseError,
    ProbabilityMassError,
    ResonantPair,
    SingularReduction,
    StepTooLarge,
    TailNotDecayed,
    UnstableSystem,
    ValidationError,
)
from .grid import (
    DEFAULT_GAIN,
    Branch,
    Bus,
    EquilibriumState,
    Generator,
    NetworkCase,
    SystemModel,
    build_system_matrix,
    solve_power_flow,
)
from .modal import ModalDecomposition, damping_ratio, decompose, frequency_hz, transform_disturbance
from .action import (
    ActionEstimate,
    action,
    beta_coefficients,
    eigen_sensitivity,
    estimate_total_action,
    fd_system_matrix,
    gamma,
    oscillation_energy,
    total_action,
)
from .wind import WindModel, power_curve, sample_wind_power
from .siting import (
    ActionHistogram,
    BaselineResult,
    Disturbance,
    SitingResult,
    baseline_all_modes,
    baseline_dominant_mode,
    chance_constrained_site,
    per_disturbance_probability,
    prepare_estimates,
    win_fractions,
)
from .oracle import (
    ExactActionSamples,
    Trajectory,
    exact_per_sample_action,
    fd_mode_movement,
    numeric_total_action,
    simulate_linear,
)

__version__ = "0.1.0"
