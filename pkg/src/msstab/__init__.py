"""Mean-square stability toolkit for feedback loops over random-delay channels."""

from .delay_channel import (
    AutoCorr,
    ChannelSpec,
    MarginalFactorizationError,
    SpectralFactor,
    autocorrelation,
    mean_channel,
    sample_delay,
    spectral_density,
    spectral_factor,
)
from .h2_synthesis import (
    GeneralPlant,
    RiccatiError,
    SynthesisError,
    SynthesisResult,
    build_general_plant,
    solve_control_dare,
    solve_filter_dare,
    synthesize,
)
from .lti_core import (
    ImpulseResponse,
    Polynomial,
    RationalTF,
    StateSpace,
    UnstableSystemError,
    feedback_interconnect,
    fir_ss,
    h2_norm_sq,
    impulse_response,
    is_schur,
    series,
    solve_dlyap,
    ss_from_tf,
    tf_from_ss,
)
from .mc_sim import SimConfig, SimResult, covariance_decay, estimate_variance, simulate_path
from .ms_analysis import (
    AnalysisReport,
    RecursionKernels,
    VarianceTrace,
    analyze,
    asymptotic_variance,
    analysis_horizon,
    assemble_nominal_loop,
    recursion_kernels,
    s_hat_sequence,
    small_gain,
    variance_recursion,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
