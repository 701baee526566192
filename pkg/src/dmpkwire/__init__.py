"""Disordered quantum wires: microscopic Anderson strips, matrix-valued
stochastic flows and the DMPK transmission-eigenvalue process."""

from . import errors
from .wire import (
    ChannelBasis,
    DisorderSlice,
    MicroWire,
    SpacingViolation,
    TransferMatrix,
    WireConfig,
    build_transverse_hamiltonian,
    channel_basis,
    check_no_degenerate_spacings,
    diagonalize_channels,
    interaction_step,
    run_microscopic,
    slice_transfer_position,
    slice_transfer_wave,
    upsilon,
)
from .transport import (
    CartanFactors,
    GroupResiduals,
    TransmissionSpectrum,
    cartan_decompose,
    conductance,
    group_residuals,
    scattering_from_transfer,
    transmission_from_scattering,
    transmission_spectrum,
)
from .flows import (
    DMPKPath,
    DMPKState,
    FlowIncrement,
    MatrixFlowPath,
    SigmaMatrix,
    aniso_sampler,
    ballistic_state,
    collapse_time_factor,
    dmpk_diffusion,
    dmpk_drift,
    integrate_dmpk,
    integrate_matrix_flow,
    mea_sampler,
    sample_aniso_increment,
    sample_mea_increment,
    sigma_from_basis,
    sigma_limit,
)
from .ensemble import (
    CovarianceReport,
    EnsembleStats,
    LocalizationReport,
    LyapunovEstimate,
    MomentReport,
    StreamingMoments,
    covariance_structure_report,
    localization_decay_report,
    lyapunov_spectrum,
    moment_convergence_report,
    run_micro_ensemble,
    run_sde_ensemble,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
