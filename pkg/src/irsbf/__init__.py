"""Joint transmit/reflect beamforming for a hardware-impaired IRS-assisted link."""

from .channels import (
    Geometry,
    LOSChannel,
    RayleighSpec,
    derive_distances,
    generate_channels,
    path_loss_linear,
    sample_los,
    sample_rayleigh,
)
from .los import LOSSolution, asymptotic_snr, los_snr_closed, solve_los
from .mm import (
    MMIterate,
    MMResult,
    MMSettings,
    lambda_max_power_iteration,
    lifted_objective,
    mm_step,
    ones_lifted_init,
    quantize_phases,
    random_lifted_init,
    run_mm,
    squarem_accelerate,
    surrogate_value,
)
from .model import (
    ChannelSet,
    CompositeChannel,
    ConfigError,
    DegenerateChannelError,
    DimensionError,
    EvalResult,
    PhaseConstraint,
    PhaseKind,
    ReflectConfig,
    SystemConfig,
    build_composite,
    effective_power,
    extract_reflect,
    lift_reflect,
    validate_config,
)
from .sdr import (
    UpperBoundResult,
    project_elliptope,
    rank_one_start,
    relaxed_objective,
    snr_bound,
    solve_sdr,
)
from .sim import (
    Scheme,
    SimResult,
    SweepSpec,
    SweepVariable,
    design_beams,
    run_iteration_study,
    run_sweep,
    simulate_ser,
    table_defaults,
)
from .txbf import (
    evaluate_snr,
    optimal_transmit_beam,
    psi_from_psi_tilde,
    psi_tilde,
    snr_from_psi_tilde,
)

__all__ = [name for name in dir() if not name.startswith("_")]

__version__ = "0.1.0"
