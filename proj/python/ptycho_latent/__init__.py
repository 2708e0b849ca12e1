"""Ptychography simulation and latent-space reconstruction toolkit."""

from ._core import (
    Autoencoder,
    ConfigError,
    DataError,
    apply_noise,
    band_mask,
    effective_rank,
    fermat_spiral,
    load_idx,
    lr_schedule,
    mitchell_kernel,
    mixed_loss,
    overlap_fraction,
    pca_leading,
    poisson_disk,
    poisson_loss,
    propagate,
    psnr,
    resize,
    resize_adjoint,
    synthesize_probe,
)

__all__ = [
    "Autoencoder",
    "ConfigError",
    "DataError",
    "apply_noise",
    "band_mask",
    "effective_rank",
    "fermat_spiral",
    "load_idx",
    "lr_schedule",
    "mitchell_kernel",
    "mixed_loss",
    "overlap_fraction",
    "pca_leading",
    "poisson_disk",
    "poisson_loss",
    "propagate",
    "psnr",
    "resize",
    "resize_adjoint",
    "synthesize_probe",
]

__version__ = "0.1.0"
