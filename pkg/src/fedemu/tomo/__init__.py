"""Tomographic reconstruction workload (Radon transform + FBP)."""

from .core import (
    BACKEND_ENV_VAR,
    BACKEND_NAMES,
    Phantom,
    ReconImage,
    ReconParams,
    Sinogram,
    detector_bins,
    export_text,
    fbp,
    get_backend,
    import_text,
    make_disk_phantom,
    radon,
    ramlak_kernel,
    rmse,
)

__all__ = [
    "BACKEND_ENV_VAR",
    "BACKEND_NAMES",
    "Phantom",
    "ReconImage",
    "ReconParams",
    "Sinogram",
    "detector_bins",
    "export_text",
    "fbp",
    "get_backend",
    "import_text",
    "make_disk_phantom",
    "radon",
    "ramlak_kernel",
    "rmse",
]
