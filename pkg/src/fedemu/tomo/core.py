"""Parallel-beam tomography: Radon transform and filtered backprojection.

Geometry: images live on [-1, 1]^2 with n x n pixel centers, detector bins
span s in [-1, 1], angles are radians in [0, pi). The forward model samples
line integrals with bilinear interpolation (zero outside the grid) at steps
of `sample_step` along each ray; reconstruction convolves rows with a
discrete Ram-Lak kernel in the spatial domain and backprojects with linear
interpolation in s.

Hot loops live in a selectable backend: `numba` (JIT-compiled, the default
when importable) or `numpy` (pure vectorized fallback). Selection order:
explicit argument, the FEDEMU_BACKEND environment variable, then automatic.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

BACKEND_ENV_VAR = "FEDEMU_BACKEND"
BACKEND_NAMES = ("numba", "numpy")

_backend_cache: dict[str, object] = {}


def get_backend(name: str | None = None):
    """Resolve a compute backend module by name, env var, or availability."""
    if name is None:
        name = os.environ.get(BACKEND_ENV_VAR)
    if name is not None:
        if name not in BACKEND_NAMES:
            raise ValueError(
                f"unknown backend {name!r}; choose from {BACKEND_NAMES}"
            )
        return _load_backend(name)  # explicit choice: failures propagate
    try:
        return _load_backend("numba")
    except ImportError:
        return _load_backend("numpy")


def _load_backend(name: str):
    module = _backend_cache.get(name)
    if module is None:
        if name == "numba":
            from . import _numba_backend as module
        else:
            from . import _numpy_backend as module
        _backend_cache[name] = module
    return module


@dataclass(eq=False)
class Phantom:
    n: int
    values: np.ndarray  # n x n, row i = y index, column j = x index

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.n < 2:
            raise ValueError(f"grid side must be >= 2, got {self.n}")
        if self.values.shape != (self.n, self.n):
            raise ValueError(f"values shape {self.values.shape} != ({self.n}, {self.n})")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("phantom values must be finite")

    @property
    def pixel_size(self) -> float:
        return 2.0 / self.n


@dataclass(eq=False)
class Sinogram:
    angles: np.ndarray  # radians in [0, pi)
    s_values: np.ndarray  # bin centers, uniform in [-1, 1]
    data: np.ndarray  # n_angles x n_s

    def __post_init__(self):
        self.angles = np.asarray(self.angles, dtype=np.float64)
        self.s_values = np.asarray(self.s_values, dtype=np.float64)
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.shape != (self.angles.size, self.s_values.size):
            raise ValueError(
                f"data shape {self.data.shape} != ({self.angles.size}, {self.s_values.size})"
            )
        if not np.all(np.isfinite(self.data)):
            raise ValueError("sinogram data must be finite")

    @property
    def n_angles(self) -> int:
        return self.angles.size

    @property
    def n_s(self) -> int:
        return self.s_values.size

    @property
    def ds(self) -> float:
        return float(self.s_values[1] - self.s_values[0])


@dataclass(eq=False)
class ReconImage:
    n: int
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.n, self.n):
            raise ValueError(f"values shape {self.values.shape} != ({self.n}, {self.n})")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("image values must be finite")


@dataclass(frozen=True)
class ReconParams:
    n_angles: int
    n_s: int
    n: int  # output grid side
    filter: str = "ramlak"  # "ramlak" | "none"
    sample_step: float | None = None  # forward-model step; None = pixel_size/2

    def __post_init__(self):
        if self.n_angles < 1:
            raise ValueError(f"n_angles must be >= 1, got {self.n_angles}")
        if self.n_s < 3 or self.n_s % 2 == 0:
            raise ValueError(f"n_s must be odd and >= 3, got {self.n_s}")
        if self.n < 2:
            raise ValueError(f"output grid side must be >= 2, got {self.n}")
        if self.filter not in ("ramlak", "none"):
            raise ValueError(f"unknown filter {self.filter!r}")


def make_disk_phantom(n: int, radius: float, intensity: float) -> Phantom:
    """Centered disk: pixel = intensity where the pixel center lies inside.

    A radius smaller than half a pixel can miss every center and produce an
    all-zero phantom; that is legal, not an error.
    """
    if not 0.0 < radius <= 1.0:
        raise ValueError(f"radius must be in (0, 1], got {radius}")
    centers = -1.0 + (np.arange(n) + 0.5) * (2.0 / n)
    xx, yy = np.meshgrid(centers, centers, indexing="xy")
    values = np.where(xx * xx + yy * yy <= radius * radius, float(intensity), 0.0)
    return Phantom(n, values)


def detector_bins(n_s: int) -> np.ndarray:
    """Bin centers: s_j = -1 + j * (2 / (n_s - 1)), j = 0 .. n_s-1."""
    step = 2.0 / (n_s - 1)
    return -1.0 + np.arange(n_s) * step


def radon(
    phantom: Phantom,
    angles,
    n_s: int,
    sample_step: float | None = None,
    backend: str | None = None,
) -> Sinogram:
    """Forward projection of the phantom at the given angles (radians)."""
    angles = np.atleast_1d(np.asarray(angles, dtype=np.float64))
    if n_s < 3 or n_s % 2 == 0:
        raise ValueError(f"n_s must be odd and >= 3, got {n_s}")
    if sample_step is None:
        sample_step = phantom.pixel_size / 2.0
    if sample_step <= 0:
        raise ValueError(f"sample_step must be > 0, got {sample_step}")
    s_values = detector_bins(n_s)
    # Symmetric ray-sample grid covering [-sqrt(2), sqrt(2)].
    m = math.ceil(math.sqrt(2.0) / sample_step)
    t_values = (np.arange(2 * m + 1) - m) * sample_step
    impl = get_backend(backend)
    data = impl.radon_accumulate(
        phantom.values,
        np.cos(angles),
        np.sin(angles),
        s_values,
        t_values,
        float(sample_step),
    )
    return Sinogram(angles, s_values, data)


def ramlak_kernel(half_width: int, ds: float) -> np.ndarray:
    """Discrete Ram-Lak filter h[-m..m]: h[0]=1/(4 ds^2), odd k = -1/(pi k ds)^2."""
    if half_width < 1:
        raise ValueError(f"half_width must be >= 1, got {half_width}")
    if ds <= 0:
        raise ValueError(f"ds must be > 0, got {ds}")
    k = np.arange(-half_width, half_width + 1)
    kernel = np.zeros(2 * half_width + 1)
    kernel[half_width] = 1.0 / (4.0 * ds * ds)
    odd = k % 2 != 0
    kernel[odd] = -1.0 / (np.pi * np.pi * k[odd].astype(np.float64) ** 2 * ds * ds)
    return kernel


def fbp(sinogram: Sinogram, params: ReconParams, backend: str | None = None) -> ReconImage:
    """Filtered backprojection onto an n x n grid over [-1, 1]^2."""
    if sinogram.data.shape != (params.n_angles, params.n_s):
        raise ValueError(
            f"sinogram shape {sinogram.data.shape} does not match params "
            f"({params.n_angles}, {params.n_s})"
        )
    n_s = params.n_s
    ds = sinogram.ds
    if params.filter == "ramlak":
        kernel = ramlak_kernel(n_s - 1, ds)
        filtered = np.empty_like(sinogram.data)
        for k in range(params.n_angles):
            # Same-length slice of the full convolution, scaled by ds for the
            # Riemann sum behind the continuous filter.
            filtered[k] = np.convolve(sinogram.data[k], kernel)[n_s - 1:2 * n_s - 1] * ds
    else:
        filtered = sinogram.data
    impl = get_backend(backend)
    values = impl.backproject(
        np.ascontiguousarray(filtered),
        np.cos(sinogram.angles),
        np.sin(sinogram.angles),
        float(sinogram.s_values[0]),
        ds,
        params.n,
    )
    values *= math.pi / params.n_angles
    return ReconImage(params.n, values)


def rmse(a, b, mask: np.ndarray | None = None) -> float:
    """Root-mean-square error over all pixels, or over a boolean mask."""
    av, bv = _values(a), _values(b)
    if av.shape != bv.shape:
        raise ValueError(f"shape mismatch: {av.shape} vs {bv.shape}")
    diff = av - bv
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != av.shape:
            raise ValueError(f"mask shape {mask.shape} != {av.shape}")
        if not mask.any():
            raise ValueError("empty mask")
        diff = diff[mask]
    return float(np.sqrt(np.mean(diff * diff)))


def _values(x) -> np.ndarray:
    return np.asarray(getattr(x, "values", x), dtype=np.float64)


def export_text(array) -> str:
    """Text form of a 2-D array: `rows cols` line, then 6-significant-digit rows."""
    values = np.atleast_2d(_values(array))
    rows, cols = values.shape
    lines = [f"{rows} {cols}"]
    for row in values:
        lines.append(" ".join(f"{v:.6g}" for v in row))
    return "\n".join(lines) + "\n"


def import_text(text: str) -> np.ndarray:
    """Inverse of export_text (up to the 6-digit rounding)."""
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        raise ValueError("empty array text")
    rows, cols = (int(part, 10) for part in lines[0].split())
    if len(lines) - 1 != rows:
        raise ValueError(f"expected {rows} rows, got {len(lines) - 1}")
    values = np.array([[float(v) for v in line.split()] for line in lines[1:]])
    if values.shape != (rows, cols):
        raise ValueError(f"expected {rows}x{cols} values, got {values.shape}")
    return values
