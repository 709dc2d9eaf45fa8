"""Heavy-tailed diffusion and flow models with Student-t noise."""

from .dof import GAUSSIAN, DofSpec
from .errors import (
    ConfigError,
    HeavyTailsError,
    NumericError,
    ParameterError,
    ScheduleInconsistencyError,
    SdeConsistencyError,
    SingularParameterizationError,
    UnsupportedConfigurationError,
)
from .estimators import StudentTDiffusion
from .kernels import (
    GridSpec,
    PosteriorParams,
    ScheduleParams,
    forward_posterior,
    perturb,
    reverse_posterior_mean_epspred,
    reverse_posterior_mean_x0pred,
    score_from_denoiser,
    tweedie_x0_estimate,
    ve_schedule,
)
from .network import (
    AdamState,
    MlpParams,
    PreconditionedDenoiser,
    Preconditioner,
    adam_step,
    denoiser_backward,
    denoiser_forward,
    init_mlp,
    load_checkpoint,
    precondition_coeffs,
    save_checkpoint,
)
from .normalizers import InverseCDFNormalizer, ZScoreNormalizer
from .rng import RngStream
from .samplers import (
    OracleDenoiser,
    SamplerConfig,
    SdePreset,
    ancestral_preset,
    ancestral_sample,
    generate,
    heun_ode_sample,
    ode_preset,
    score_ode_step,
    sde_sample,
    sde_step,
    tflow_heun_sample,
    timestep_grid,
)
from .student_t import (
    StudentTParams,
    sample_chi2_scaled,
    sample_student_t,
    standard_t_noise,
    student_t_log_density,
)
from .training import TrainConfig, TrainResult, sample_noise_level, tedm_loss_batch, tflow_loss_batch, train

__version__ = "0.1.0"

__all__ = [
    "GAUSSIAN",
    "DofSpec",
    "RngStream",
    "StudentTDiffusion",
    "StudentTParams",
    "sample_chi2_scaled",
    "sample_student_t",
    "standard_t_noise",
    "student_t_log_density",
    "GridSpec",
    "ScheduleParams",
    "PosteriorParams",
    "ve_schedule",
    "perturb",
    "forward_posterior",
    "reverse_posterior_mean_x0pred",
    "reverse_posterior_mean_epspred",
    "score_from_denoiser",
    "tweedie_x0_estimate",
    "MlpParams",
    "Preconditioner",
    "PreconditionedDenoiser",
    "AdamState",
    "init_mlp",
    "adam_step",
    "precondition_coeffs",
    "denoiser_forward",
    "denoiser_backward",
    "save_checkpoint",
    "load_checkpoint",
    "TrainConfig",
    "TrainResult",
    "train",
    "tedm_loss_batch",
    "tflow_loss_batch",
    "sample_noise_level",
    "SamplerConfig",
    "SdePreset",
    "OracleDenoiser",
    "timestep_grid",
    "heun_ode_sample",
    "ancestral_sample",
    "sde_step",
    "sde_sample",
    "score_ode_step",
    "tflow_heun_sample",
    "ode_preset",
    "ancestral_preset",
    "generate",
    "ZScoreNormalizer",
    "InverseCDFNormalizer",
    "HeavyTailsError",
    "ConfigError",
    "ParameterError",
    "UnsupportedConfigurationError",
    "ScheduleInconsistencyError",
    "SingularParameterizationError",
    "SdeConsistencyError",
    "NumericError",
]
