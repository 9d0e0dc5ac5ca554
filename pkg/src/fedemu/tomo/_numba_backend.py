"""JIT-compiled compute kernels; the default backend when numba imports.

Plain nested loops over rays and pixels; numba turns these into tight
machine code. Sequential accumulation keeps results deterministic.
"""

from __future__ import annotations

import numpy as np
from numba import njit

NAME = "numba"


@njit(cache=True)
def _bilinear_point(image, n, px, x, y):
    gx = (x + 1.0) / px - 0.5
    gy = (y + 1.0) / px - 0.5
    ix = int(np.floor(gx))
    iy = int(np.floor(gy))
    wx = gx - ix
    wy = gy - iy
    total = 0.0
    if 0 <= ix < n and 0 <= iy < n:
        total += image[iy, ix] * (1.0 - wx) * (1.0 - wy)
    if 0 <= ix + 1 < n and 0 <= iy < n:
        total += image[iy, ix + 1] * wx * (1.0 - wy)
    if 0 <= ix < n and 0 <= iy + 1 < n:
        total += image[iy + 1, ix] * (1.0 - wx) * wy
    if 0 <= ix + 1 < n and 0 <= iy + 1 < n:
        total += image[iy + 1, ix + 1] * wx * wy
    return total


@njit(cache=True)
def radon_accumulate(image, cos_a, sin_a, s_values, t_values, step):
    n = image.shape[0]
    px = 2.0 / n
    n_angles = cos_a.size
    n_s = s_values.size
    n_t = t_values.size
    data = np.zeros((n_angles, n_s))
    for k in range(n_angles):
        c = cos_a[k]
        s = sin_a[k]
        for j in range(n_s):
            acc = 0.0
            sj = s_values[j]
            for ti in range(n_t):
                t = t_values[ti]
                acc += _bilinear_point(image, n, px, sj * c - t * s, sj * s + t * c)
            data[k, j] = acc * step
    return data


@njit(cache=True)
def backproject(filtered, cos_a, sin_a, s0, ds, n):
    n_angles, n_s = filtered.shape
    px = 2.0 / n
    image = np.zeros((n, n))
    for iy in range(n):
        y = -1.0 + (iy + 0.5) * px
        for ix in range(n):
            x = -1.0 + (ix + 0.5) * px
            acc = 0.0
            for k in range(n_angles):
                pos = (x * cos_a[k] + y * sin_a[k] - s0) / ds
                i0 = int(np.floor(pos))
                if 0 <= i0 < n_s - 1:
                    w = pos - i0
                    acc += filtered[k, i0] * (1.0 - w) + filtered[k, i0 + 1] * w
            image[iy, ix] = acc
    return image
