"""Pure-numpy compute kernels; the fallback when numba is unavailable.

The arithmetic mirrors the numba backend step for step (same interpolation
formulas, same accumulation structure per angle) so the two agree to
rounding noise, not just statistically.
"""

from __future__ import annotations

import numpy as np

NAME = "numpy"


def radon_accumulate(image, cos_a, sin_a, s_values, t_values, step):
    n = image.shape[0]
    px = 2.0 / n
    n_angles = cos_a.size
    data = np.zeros((n_angles, s_values.size))
    s_col = s_values[:, np.newaxis]
    t_row = t_values[np.newaxis, :]
    for k in range(n_angles):
        x = s_col * cos_a[k] - t_row * sin_a[k]
        y = s_col * sin_a[k] + t_row * cos_a[k]
        data[k] = _bilinear(image, n, px, x, y).sum(axis=1) * step
    return data


def _bilinear(image, n, px, x, y):
    # Continuous pixel-index coordinates; centers at integers 0..n-1.
    gx = (x + 1.0) / px - 0.5
    gy = (y + 1.0) / px - 0.5
    ix = np.floor(gx).astype(np.int64)
    iy = np.floor(gy).astype(np.int64)
    wx = gx - ix
    wy = gy - iy

    def sample(ii, jj):
        inside = (ii >= 0) & (ii < n) & (jj >= 0) & (jj < n)
        return np.where(inside, image[jj.clip(0, n - 1), ii.clip(0, n - 1)], 0.0)

    v00 = sample(ix, iy)
    v10 = sample(ix + 1, iy)
    v01 = sample(ix, iy + 1)
    v11 = sample(ix + 1, iy + 1)
    top = v00 * (1.0 - wx) + v10 * wx
    bottom = v01 * (1.0 - wx) + v11 * wx
    return top * (1.0 - wy) + bottom * wy


def backproject(filtered, cos_a, sin_a, s0, ds, n):
    n_angles, n_s = filtered.shape
    px = 2.0 / n
    centers = -1.0 + (np.arange(n) + 0.5) * px
    xx, yy = np.meshgrid(centers, centers, indexing="xy")
    image = np.zeros((n, n))
    for k in range(n_angles):
        s = xx * cos_a[k] + yy * sin_a[k]
        pos = (s - s0) / ds
        i0 = np.floor(pos).astype(np.int64)
        w = pos - i0
        inside = (i0 >= 0) & (i0 < n_s - 1)
        i0c = i0.clip(0, n_s - 2)
        row = filtered[k]
        value = row[i0c] * (1.0 - w) + row[i0c + 1] * w
        image += np.where(inside, value, 0.0)
    return image
