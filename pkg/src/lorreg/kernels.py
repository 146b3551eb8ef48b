"""Kernel families and separable convolution.

Three kernels drive the local-histogram machinery: a spatial measurement
kernel (sigma), an intensity window (beta), and a spatial integration
window (alpha).  Spatial Gaussians are normalized to unit integral; the
intensity window is the unnormalized Gaussian exp(-t^2 / (2 beta^2)) whose
mass is absorbed by the downstream density normalization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .grid import ImageGrid

GAUSSIAN = "gaussian"
CUBIC_BSPLINE = "cubic_bspline"
BOXCAR = "boxcar"

#: Standard deviation of the centered cubic B-spline, used operationally
#: when matching B-spline and Gaussian kernel experiments.
BSPLINE_EQUIVALENT_STD = 0.6

#: Exact standard deviation of the centered cubic B-spline (variance 1/3).
BSPLINE_ANALYTIC_STD = 1.0 / math.sqrt(3.0)


class KernelError(ValueError):
    pass


@dataclass(frozen=True)
class KernelSpec:
    """A 1D kernel profile: family, scale and (for Gaussians) truncation.

    ``scale`` is the std for Gaussian, the full width for Boxcar and the
    dilation for the cubic B-spline.  ``normalized`` selects unit-integral
    Gaussians (spatial use) versus unit-peak Gaussians (intensity window).
    """

    family: str
    scale: float
    truncation_radius: float = 4.0
    normalized: bool = True

    def __post_init__(self):
        if self.family not in (GAUSSIAN, CUBIC_BSPLINE, BOXCAR):
            raise KernelError(f"unknown kernel family {self.family!r}")
        if not self.scale > 0:
            raise KernelError("kernel scale must be > 0")
        if self.truncation_radius <= 0:
            raise KernelError("truncation_radius must be > 0")

    @property
    def support_radius(self) -> float:
        """Half-width of the (truncated) support in the kernel's units."""
        if self.family == GAUSSIAN:
            return self.truncation_radius * self.scale
        if self.family == CUBIC_BSPLINE:
            return 2.0 * self.scale
        return self.scale / 2.0


def gaussian_kernel(scale: float, truncation_radius: float = 4.0) -> KernelSpec:
    return KernelSpec(GAUSSIAN, scale, truncation_radius)


def parzen_gaussian(beta: float) -> KernelSpec:
    """Unit-peak Gaussian intensity window of scale beta."""
    return KernelSpec(GAUSSIAN, beta, normalized=False)


def bspline_kernel(scale: float = 1.0) -> KernelSpec:
    return KernelSpec(CUBIC_BSPLINE, scale)


def boxcar_kernel(width: float) -> KernelSpec:
    return KernelSpec(BOXCAR, width)


@dataclass(frozen=True)
class ScaleTriple:
    """The three scales of a local histogram: measurement (sigma, voxels),
    intensity (beta, normalized units), integration (alpha, voxels)."""

    sigma: float
    beta: float
    alpha: float

    def __post_init__(self):
        if self.sigma < 0:
            raise KernelError("sigma must be >= 0")
        if not self.beta > 0:
            raise KernelError("beta must be > 0")
        if not self.alpha > 0:  # inf is fine
            raise KernelError("alpha must be > 0 or inf")


def bspline3(t):
    """The centered cubic B-spline B^3(t), support (-2, 2)."""
    t = np.abs(np.asarray(t, dtype=np.float64))
    out = np.zeros_like(t)
    near = t < 1
    far = (t >= 1) & (t < 2)
    out[near] = 2.0 / 3.0 - t[near] ** 2 + 0.5 * t[near] ** 3
    out[far] = (2.0 - t[far]) ** 3 / 6.0
    return out


def bspline3_deriv(t):
    """d/dt of the centered cubic B-spline."""
    t = np.asarray(t, dtype=np.float64)
    s = np.sign(t)
    a = np.abs(t)
    out = np.zeros_like(a)
    near = a < 1
    far = (a >= 1) & (a < 2)
    out[near] = -2.0 * a[near] + 1.5 * a[near] ** 2
    out[far] = -0.5 * (2.0 - a[far]) ** 2
    return s * out


def kernel_eval(spec: KernelSpec, t) -> np.ndarray:
    """Evaluate a 1D kernel profile at offsets ``t``."""
    t = np.asarray(t, dtype=np.float64)
    s = spec.scale
    if spec.family == GAUSSIAN:
        g = np.exp(-t * t / (2.0 * s * s))
        if spec.normalized:
            g = g / math.sqrt(2.0 * math.pi * s * s)
        return g
    if spec.family == CUBIC_BSPLINE:
        b = bspline3(t / s)
        return b / s if spec.normalized else b
    return np.where((t >= -s / 2.0) & (t < s / 2.0), 1.0, 0.0)


def kernel_eval_deriv(spec: KernelSpec, t) -> np.ndarray:
    """Derivative of the kernel profile w.r.t. its offset argument."""
    t = np.asarray(t, dtype=np.float64)
    s = spec.scale
    if spec.family == GAUSSIAN:
        return kernel_eval(spec, t) * (-t / (s * s))
    if spec.family == CUBIC_BSPLINE:
        d = bspline3_deriv(t / s) / s
        return d / s if spec.normalized else d
    raise KernelError("the Boxcar kernel is not differentiable")


def discrete_taps(spec: KernelSpec) -> np.ndarray:
    """Sample a kernel at integer offsets and renormalize to unit sum.

    These taps define the discrete convolution used everywhere a spatial
    kernel acts on grid data, so that a single discretization is shared by
    convolution, local histograms and the moment identities.
    """
    if spec.family == BOXCAR:
        width = spec.scale
        if abs(width - round(width)) > 1e-12:
            raise KernelError("Boxcar convolution requires an integer width in voxels")
        width = int(round(width))
        if width % 2 == 0:
            raise KernelError("Boxcar convolution requires an odd integer width")
        return np.full(width, 1.0 / width)
    radius = max(1, int(math.ceil(spec.support_radius)))
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    taps = kernel_eval(spec, t)
    total = taps.sum()
    if total <= 0:
        raise KernelError("kernel taps sum to zero; scale too small")
    return taps / total


def convolve(image: ImageGrid, spec: KernelSpec) -> ImageGrid:
    """Separable convolution with mirror boundary handling."""
    taps = discrete_taps(spec)
    out = image.values
    for axis in range(image.ndim):
        out = ndimage.convolve1d(out, taps, axis=axis, mode="mirror")
    return ImageGrid(out, spacing=image.spacing)


def smooth(image: ImageGrid, sigma: float) -> ImageGrid:
    """Gaussian smoothing at measurement scale sigma (no-op for sigma=0)."""
    if sigma <= 0:
        return image
    return convolve(image, gaussian_kernel(sigma))


def bspline_equivalent_std() -> float:
    """Operational std of the cubic B-spline used when matching B-spline
    and Gaussian kernels (the analytic value is ``BSPLINE_ANALYTIC_STD``)."""
    return BSPLINE_EQUIVALENT_STD
