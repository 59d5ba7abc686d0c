"""Spectral neural operator with parallel mode-truncated branches.

Everything runs on numpy: the model, its hand-derived gradients, the PDE
data oracles, and the evaluation protocols. See README.md for a tour.
"""

from .errors import ConfigError, DataError, DpnoError, NumericError
from .tensor import (
    GridMeta,
    dft2_reference,
    fft2_forward,
    fft2_inverse,
    spectral_energy_fraction,
    spectral_resize,
    spectrum_logmag,
)
from .model import DPNOConfig, DPNOModel, model_init
from .optim import AdamState
from .gradcheck import grad_check
from .datagen import (
    FieldDataset,
    GRFSpec,
    NSTrajectory,
    darcy_coefficient,
    darcy_residual,
    darcy_sample_replay,
    darcy_solve_fd,
    dataset_build,
    default_ns_forcing,
    downsample_field,
    grf_sample,
    load_dataset,
    normalize_with,
    ns_rollout,
)
from .training import (
    Checkpoint,
    TrainConfig,
    TrainState,
    checkpoint_load,
    checkpoint_save,
    evaluate,
    latest_checkpoint,
    read_metrics,
    train_run,
    write_metrics,
)
from .protocols import (
    AblationResult,
    ModeCoverageReport,
    SpectrumReport,
    ZeroShotResult,
    ablation_run,
    band_mask,
    mode_coverage_report,
    spectrum_report,
    zero_shot_eval,
)

__version__ = "0.1.0"

__all__ = [
    "AblationResult",
    "AdamState",
    "Checkpoint",
    "ConfigError",
    "DPNOConfig",
    "DPNOModel",
    "DataError",
    "DpnoError",
    "FieldDataset",
    "GRFSpec",
    "GridMeta",
    "ModeCoverageReport",
    "NSTrajectory",
    "NumericError",
    "SpectrumReport",
    "TrainConfig",
    "TrainState",
    "ZeroShotResult",
    "ablation_run",
    "band_mask",
    "checkpoint_load",
    "checkpoint_save",
    "darcy_coefficient",
    "darcy_residual",
    "darcy_sample_replay",
    "darcy_solve_fd",
    "dataset_build",
    "default_ns_forcing",
    "dft2_reference",
    "downsample_field",
    "evaluate",
    "fft2_forward",
    "fft2_inverse",
    "grad_check",
    "grf_sample",
    "latest_checkpoint",
    "load_dataset",
    "mode_coverage_report",
    "model_init",
    "normalize_with",
    "ns_rollout",
    "read_metrics",
    "spectral_energy_fraction",
    "spectral_resize",
    "spectrum_logmag",
    "spectrum_report",
    "train_run",
    "write_metrics",
    "zero_shot_eval",
]
