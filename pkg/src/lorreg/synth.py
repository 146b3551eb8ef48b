"""Deterministic synthetic test images.

All generators are deterministic; randomized images take an explicit
64-bit seed.
"""

from __future__ import annotations

import numpy as np

from .grid import ImageGrid, GridError
from .kernels import gaussian_kernel, convolve


def _coords(dims):
    grids = np.meshgrid(*(np.arange(n, dtype=np.float64) for n in dims), indexing="ij")
    return np.stack(grids, axis=-1)


def gaussian_blob(dims, center=None, std: float = 5.0) -> ImageGrid:
    """A spatial Gaussian bump, peak value 1 at ``center`` (voxel units)."""
    if not std > 0:
        raise GridError("blob std must be > 0")
    dims = tuple(int(n) for n in dims)
    if center is None:
        center = tuple((n - 1) / 2.0 for n in dims)
    center = np.asarray(center, dtype=np.float64)
    delta = _coords(dims) - center
    r2 = np.sum(delta * delta, axis=-1)
    values = np.exp(-r2 / (2.0 * std * std))
    return ImageGrid(values, intensity_range=(0.0, 1.0))


def linear_gradient(dims, direction, magnitude: float = 1.0) -> ImageGrid:
    """A linear ramp I(x) = magnitude * (direction . x), rescaled to [0, 1].

    ``direction`` must be a unit vector; the pre-rescale gradient is
    constant and equal to magnitude * direction.
    """
    direction = np.asarray(direction, dtype=np.float64)
    norm = np.linalg.norm(direction)
    if norm == 0:
        raise GridError("direction must be nonzero")
    if abs(norm - 1.0) > 1e-9:
        raise GridError("direction must be a unit vector")
    if not magnitude > 0:
        raise GridError("magnitude must be > 0")
    dims = tuple(int(n) for n in dims)
    if len(dims) != direction.size:
        raise GridError("direction length must match dims")
    ramp = magnitude * np.tensordot(_coords(dims), direction, axes=([-1], [0]))
    lo, hi = ramp.min(), ramp.max()
    values = (ramp - lo) / (hi - lo)
    return ImageGrid(values, intensity_range=(0.0, 1.0))


def ramp(dims, direction, slope: float) -> ImageGrid:
    """An unrescaled ramp with explicit intensity slope per voxel.

    Unlike :func:`linear_gradient` the values are not mapped to [0, 1];
    the caller controls the span via ``intensity_range`` of the result.
    """
    direction = np.asarray(direction, dtype=np.float64)
    direction = direction / np.linalg.norm(direction)
    values = slope * np.tensordot(_coords(tuple(dims)), direction, axes=([-1], [0]))
    return ImageGrid(values)


def smooth_random_field(dims, sigma: float = 3.0, seed: int = 0,
                        low: float = 0.0, high: float = 1.0) -> ImageGrid:
    """White noise smoothed at scale sigma, rescaled into [low, high]."""
    rng = np.random.default_rng(np.uint64(seed))
    noise = rng.standard_normal(tuple(int(n) for n in dims))
    img = ImageGrid(noise)
    if sigma > 0:
        img = convolve(img, gaussian_kernel(sigma))
    v = img.values
    v = (v - v.min()) / (v.max() - v.min()) * (high - low) + low
    return ImageGrid(v, intensity_range=(0.0, 1.0) if (low >= 0 and high <= 1) else None)
