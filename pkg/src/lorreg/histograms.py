"""Local and joint histograms: counting, Parzen-window and generalized
partial-volume estimation, normalization and moments.

All histogram code works on the normalized intensity scale [0, 1] with M
equal bins centered at (n + 1/2) / M.  Histogram objects store raw
accumulated weights until :func:`normalize` converts them to densities
(the accumulated mass is kept as metadata, which the measure gradients
need for the normalization chain).

Two joint estimators are provided.  The Parzen-window (PW) estimator
weights every sample into bins of both axes with the intensity window and
is exactly symmetric under argument swap.  The generalized partial-volume
(GPV) estimator bins the fixed image hard and distributes integration-
window weights over the grid nodes of the moving image around each warped
sample position; for a finite integration scale this is asymmetric, and
the three marginal estimates of the fixed image (direct, joint row sums,
swapped-role joint) genuinely disagree.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace, field

import numpy as np

from .bspline import InterpolantCoefficients, sample
from .grid import ImageGrid
from .kernels import (KernelSpec, ScaleTriple, kernel_eval, kernel_eval_deriv,
                      parzen_gaussian, boxcar_kernel, gaussian_kernel,
                      GAUSSIAN, CUBIC_BSPLINE, BOXCAR)

PW = "pw"
GPV = "gpv"
LOI = "loi"


class HistogramError(ValueError):
    pass


def bin_centers(m: int) -> np.ndarray:
    return (np.arange(m) + 0.5) / m


def bin_index(values: np.ndarray, m: int) -> np.ndarray:
    """Hard half-open binning of [0, 1] values into m bins (1.0 -> last)."""
    idx = np.floor(np.asarray(values) * m).astype(np.int64)
    return np.clip(idx, 0, m - 1)


@dataclass(frozen=True)
class LocalHistogram:
    """Histogram over intensity bins, optionally tied to a location."""

    bins: np.ndarray
    scales: ScaleTriple | None = None
    location: np.ndarray | None = None
    sample_count: int = 0
    mass: float | None = None  # pre-normalization integral, set by normalize()

    @property
    def bin_count(self) -> int:
        return len(self.bins)

    @property
    def delta(self) -> float:
        return 1.0 / self.bin_count

    @property
    def normalized(self) -> bool:
        return self.mass is not None

    @property
    def masses(self) -> np.ndarray:
        """Per-bin probability masses (bins are densities once normalized)."""
        b = np.asarray(self.bins, dtype=np.float64)
        total = b.sum()
        if total <= 0:
            raise HistogramError("empty histogram")
        return b / total

    @property
    def k(self) -> float:
        """Per-sample histogram mass, the normalization constant of the
        intensity window (beta * sqrt(2 pi) for the Gaussian window)."""
        total = self.mass if self.mass is not None else float(np.sum(self.bins)) * self.delta
        if self.sample_count <= 0:
            raise HistogramError("sample_count unknown; cannot compute k")
        return total / self.sample_count


@dataclass(frozen=True)
class JointHistogram:
    """M x M joint histogram over intensity pairs plus its marginals."""

    joint: np.ndarray
    estimator: str
    scales: ScaleTriple | None = None
    sample_count: int = 0
    mass: float | None = None
    # GPV stores several inconsistent estimates of the fixed-image marginal;
    # keys: "direct", "from_joint", "from_swapped" (each an M-vector of masses).
    marginal_variants: dict = field(default_factory=dict)

    @property
    def bin_count(self) -> int:
        return self.joint.shape[0]

    @property
    def delta(self) -> float:
        return 1.0 / self.bin_count

    @property
    def normalized(self) -> bool:
        return self.mass is not None

    @property
    def masses(self) -> np.ndarray:
        total = self.joint.sum()
        if total <= 0:
            raise HistogramError("empty histogram")
        return self.joint / total

    @property
    def marginal_i(self) -> np.ndarray:
        return self.joint.sum(axis=1)

    @property
    def marginal_j(self) -> np.ndarray:
        return self.joint.sum(axis=0)


def normalize(h):
    """Normalize a histogram to a unit-integral density (idempotent).

    The bins become densities over [0, 1] (or [0, 1]^2) and the original
    integral is retained in ``mass``.
    """
    if isinstance(h, LocalHistogram):
        total = float(np.sum(h.bins)) * h.delta
        if total <= 0:
            raise HistogramError("cannot normalize an empty histogram")
        mass = h.mass if h.normalized else total
        return replace(h, bins=h.bins / total, mass=mass)
    if isinstance(h, JointHistogram):
        cell = h.delta * h.delta
        total = float(np.sum(h.joint)) * cell
        if total <= 0:
            raise HistogramError("cannot normalize an empty histogram")
        mass = h.mass if h.normalized else total
        return replace(h, joint=h.joint / total, mass=mass)
    raise TypeError(f"not a histogram: {type(h)!r}")


# ---------------------------------------------------------------------------
# Counting and Parzen estimation

def counting_histogram(image: ImageGrid, m: int) -> LocalHistogram:
    """Classic hard-binned histogram; bin weights sum to the voxel count."""
    if m < 2:
        raise HistogramError("need at least 2 bins")
    values = image.normalized().values if image.intensity_range != (0.0, 1.0) \
        else image.values
    idx = bin_index(values.ravel(), m)
    bins = np.bincount(idx, minlength=m).astype(np.float64)
    return LocalHistogram(bins=bins, sample_count=values.size)


def merge_bin_pairs(h: LocalHistogram) -> LocalHistogram:
    """Sum adjacent bin pairs: the Boxcar-smoothing view of bin widening."""
    if h.bin_count % 2:
        raise HistogramError("need an even number of bins to merge pairs")
    bins = h.bins.reshape(-1, 2).sum(axis=1)
    return replace(h, bins=bins)


def parzen_weights(values: np.ndarray, parzen: KernelSpec, m: int) -> np.ndarray:
    """(P, M) window weights P(v - i_n) for every sample against every bin."""
    centers = bin_centers(m)
    return kernel_eval(parzen, np.subtract.outer(values, centers))


def parzen_marginal(values: np.ndarray, parzen: KernelSpec, m: int,
                    scales: ScaleTriple | None = None) -> LocalHistogram:
    """Global Parzen histogram of a sample of normalized intensities."""
    values = np.asarray(values, dtype=np.float64).ravel()
    bins = parzen_weights(values, parzen, m).sum(axis=0)
    return LocalHistogram(bins=bins, scales=scales, sample_count=values.size)


def soft_isophote(image: ImageGrid, i0: float, parzen: KernelSpec) -> ImageGrid:
    """Per-voxel window response P(I(x) - i0), the soft level set at i0."""
    if not 0.0 <= i0 <= 1.0:
        raise HistogramError("isophote level must lie in [0, 1]")
    vals = kernel_eval(parzen, image.values - i0)
    return ImageGrid(vals, spacing=image.spacing, intensity_range=(0.0, 1.0))


# ---------------------------------------------------------------------------
# Local (LOI) histograms

def _window_taps_1d(w: KernelSpec) -> np.ndarray:
    """Integer-offset taps of the integration window, unit sum (shared with
    the separable convolution discretization)."""
    from .kernels import discrete_taps
    return discrete_taps(w)


def local_histogram(image: ImageGrid, x, scales: ScaleTriple,
                    parzen: KernelSpec | None = None,
                    window: KernelSpec | None = None,
                    m: int = 64) -> LocalHistogram:
    """Local histogram at position x: window-weighted Parzen responses of
    the (already sigma-smoothed) image around x.

    ``bins[n] = sum_psi P(I(psi) - i_n, beta) * W(x - psi, alpha)`` over
    grid voxels psi; requires a finite integration scale.
    """
    if not math.isfinite(scales.alpha):
        raise HistogramError("local_histogram needs finite alpha; "
                             "use the global Parzen estimator for alpha=inf")
    if parzen is None:
        parzen = parzen_gaussian(scales.beta)
    if window is None:
        window = gaussian_kernel(scales.alpha)
    x = np.asarray(x, dtype=np.float64)
    taps = _window_taps_1d(window)
    radius = (len(taps) - 1) // 2

    # Separable window: weights along each axis around round(x).
    center = np.round(x).astype(int)
    weight = np.ones(())
    slices = []
    for d, n in enumerate(image.dims):
        lo = max(center[d] - radius, 0)
        hi = min(center[d] + radius + 1, n)
        offs = np.arange(lo, hi) - center[d]
        w1 = taps[offs + radius]
        shape = [1] * image.ndim
        shape[d] = len(offs)
        weight = weight * w1.reshape(shape)
        slices.append(slice(lo, hi))
    patch = image.values[tuple(slices)]
    pw = parzen_weights(patch.ravel(), parzen, m)
    bins = pw.T @ weight.ravel()
    return LocalHistogram(bins=bins, scales=scales, location=x,
                          sample_count=patch.size)


# ---------------------------------------------------------------------------
# Joint estimators

def grid_points(dims) -> np.ndarray:
    grids = np.meshgrid(*(np.arange(n, dtype=np.float64) for n in dims), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def overlap_mask(points: np.ndarray, dims) -> np.ndarray:
    mask = np.ones(points.shape[0], dtype=bool)
    for d, n in enumerate(dims):
        mask &= (points[:, d] >= 0.0) & (points[:, d] <= n - 1.0)
    return mask


def pw_joint_from_samples(iv: np.ndarray, jv: np.ndarray, parzen: KernelSpec,
                          m: int, scales: ScaleTriple | None = None) -> JointHistogram:
    """PW joint from paired normalized intensity samples."""
    wi = parzen_weights(iv, parzen, m)
    wj = parzen_weights(jv, parzen, m)
    joint = wi.T @ wj
    return JointHistogram(joint=joint, estimator=PW, scales=scales,
                          sample_count=len(iv))


def pw_joint(moving: InterpolantCoefficients, fixed: ImageGrid, transform,
             scales: ScaleTriple, m: int,
             parzen: KernelSpec | None = None,
             points: np.ndarray | None = None) -> JointHistogram:
    """PW joint histogram of the warped moving image against the fixed one.

    Samples default to all fixed-grid voxel centers; warped positions that
    leave the moving domain are dropped.  ``moving`` must hold coefficients
    of the normalized (and, if requested, sigma-smoothed) image.
    """
    if parzen is None:
        parzen = parzen_gaussian(scales.beta)
    if points is None:
        points = grid_points(fixed.dims)
        jv = fixed.values.ravel()
    else:
        jv = sample_fixed(fixed, points)
    warped = transform.apply(points)
    mask = overlap_mask(warped, moving.dims)
    iv = np.clip(sample(moving, warped[mask]), 0.0, 1.0)
    return pw_joint_from_samples(iv, jv[mask], parzen, m, scales)


def sample_fixed(fixed: ImageGrid, points: np.ndarray) -> np.ndarray:
    """Fixed-image values at sample points (nearest voxel; sample points are
    normally voxel centers, where this is exact)."""
    idx = tuple(np.clip(np.round(points[:, d]).astype(int), 0, fixed.dims[d] - 1)
                for d in range(fixed.ndim))
    return fixed.values[idx]


def _stencil_radius(w: KernelSpec) -> int:
    return max(0, int(math.ceil(w.support_radius)) - 1) if w.family == CUBIC_BSPLINE \
        else int(math.ceil(w.support_radius))


def gpv_scatter(node_bins: np.ndarray, warped: np.ndarray, fixed_bins: np.ndarray,
                w: KernelSpec, m: int) -> np.ndarray:
    """Accumulate the GPV joint: for every warped sample position, window
    weights over nearby moving-grid nodes scatter that node's hard class
    against the sample's fixed class.  Off-grid nodes are dropped.
    """
    dims = node_bins.shape
    ndim = node_bins.ndim
    n = len(warped)
    base = np.floor(warped).astype(np.int64)
    radius = _stencil_radius(w)
    taps = np.arange(-radius, radius + 2)
    strides = [int(np.prod(dims[d + 1:])) for d in range(ndim)]
    # The window weight factorizes over axes, so evaluate one kernel table
    # per axis and expand the stencil by broadcasting instead of looping
    # over every offset combination.
    flat_node = np.zeros((n, 1), dtype=np.int64)
    weight = np.ones((n, 1))
    for d in range(ndim):
        nodes = base[:, d, None] + taps[None, :]
        kw = kernel_eval(w, warped[:, d, None] - nodes)
        kw[(nodes < 0) | (nodes >= dims[d])] = 0.0
        nodes = np.clip(nodes, 0, dims[d] - 1)
        flat_node = (flat_node[:, :, None]
                     + (nodes * strides[d])[:, None, :]).reshape(n, -1)
        weight = (weight[:, :, None] * kw[:, None, :]).reshape(n, -1)
    flat = node_bins.ravel()[flat_node] * m + fixed_bins[:, None]
    joint = np.bincount(flat.ravel(), weights=weight.ravel(), minlength=m * m)
    return joint.reshape(m, m)


def gpv_joint(moving_image: ImageGrid, fixed_image: ImageGrid, transform,
              scales: ScaleTriple, m: int,
              window: KernelSpec | None = None,
              moving_coeffs: InterpolantCoefficients | None = None,
              compute_variants: bool = False) -> JointHistogram:
    """GPV joint histogram: hard fixed-image classes against integration-
    window-smeared moving-image classes at the warped sample positions.

    Both images must already be sigma-smoothed and normalized to [0, 1].
    With ``compute_variants`` the three estimates of the fixed-image
    marginal are stored: hard binning of the fixed samples ("direct"),
    the joint's fixed-axis sums ("from_joint"), and the fixed-axis sums
    of the role-swapped joint ("from_swapped", needs ``moving_coeffs``).
    """
    if not (math.isfinite(scales.alpha) and scales.alpha > 0):
        raise HistogramError("GPV needs a finite positive integration scale")
    if window is None:
        window = gaussian_kernel(scales.alpha)
    points = grid_points(fixed_image.dims)
    jv = fixed_image.values.ravel()
    warped = transform.apply(points)
    mask = overlap_mask(warped, moving_image.dims)
    fixed_bins = bin_index(jv[mask], m)
    node_bins = bin_index(moving_image.values, m)
    joint = gpv_scatter(node_bins, warped[mask], fixed_bins, window, m)
    variants = {}
    if compute_variants:
        direct = np.bincount(fixed_bins, minlength=m).astype(np.float64)
        variants["direct"] = direct / direct.sum()
        col = joint.sum(axis=0)
        variants["from_joint"] = col / col.sum()
        if moving_coeffs is not None:
            # Swapped roles in the same geometry: the moving image is
            # interpolated and binned hard, the fixed classes are smeared
            # around the unwarped sample positions.
            iv = np.clip(sample(moving_coeffs, warped[mask]), 0.0, 1.0)
            swapped = gpv_scatter(bin_index(fixed_image.values, m),
                                  points[mask], bin_index(iv, m), window, m)
            row = swapped.sum(axis=1)
            variants["from_swapped"] = row / row.sum()
    return JointHistogram(joint=joint, estimator=GPV, scales=scales,
                          sample_count=int(mask.sum()),
                          marginal_variants=variants)


# ---------------------------------------------------------------------------
# Moments

@dataclass(frozen=True)
class MomentSet:
    """Raw and central histogram moments plus the window's own central
    moments (those of a zero-mean Gaussian of scale beta)."""

    raw: np.ndarray
    central: np.ndarray
    parzen_central: np.ndarray


def gaussian_central_moments(beta: float, up_to: int) -> np.ndarray:
    out = np.zeros(up_to + 1)
    out[0] = 1.0
    for n in range(2, up_to + 1, 2):
        # (n-1)!! * beta^n
        dfact = 1
        for k in range(n - 1, 0, -2):
            dfact *= k
        out[n] = dfact * beta ** n
    return out


def moments(h: LocalHistogram, up_to: int = 5) -> MomentSet:
    """Raw and central moments of a normalized local histogram by
    quadrature over bin centers."""
    if up_to > 5:
        raise HistogramError("moments are supported up to order 5")
    if not h.normalized:
        h = normalize(h)
    centers = bin_centers(h.bin_count)
    w = h.bins * h.delta
    raw = np.array([np.sum(centers ** n * w) for n in range(up_to + 1)])
    mu = raw[1]
    central = np.array([np.sum((centers - mu) ** n * w) for n in range(up_to + 1)])
    beta = h.scales.beta if h.scales is not None else 0.0
    return MomentSet(raw=raw, central=central,
                     parzen_central=gaussian_central_moments(beta, up_to))


# ---------------------------------------------------------------------------
# CSV dump format (consumed by the cli plot emitter)

def dump_joint_csv(h: JointHistogram, path) -> None:
    scales = h.scales or ScaleTriple(0.0, 1.0, math.inf)
    with open(path, "w", newline="") as fh:
        fh.write(f"# estimator={h.estimator},M={h.bin_count},"
                 f"sigma={scales.sigma},beta={scales.beta},alpha={scales.alpha},"
                 f"N={h.sample_count}\n")
        writer = csv.writer(fh)
        for row in np.asarray(h.joint):
            writer.writerow([repr(float(v)) for v in row])


def load_joint_csv(path):
    """Read a joint-histogram CSV; returns (header dict, M x M array)."""
    header = {}
    rows = []
    with open(path, newline="") as fh:
        text = fh.read()
    for line in io.StringIO(text):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            for part in line[1:].strip().split(","):
                if "=" in part:
                    key, val = part.split("=", 1)
                    header[key.strip()] = val.strip()
            continue
        rows.append([float(v) for v in next(csv.reader([line]))])
    if not rows or any(len(r) != len(rows[0]) for r in rows):
        raise HistogramError("malformed joint-histogram CSV")
    arr = np.asarray(rows, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise HistogramError("malformed joint-histogram CSV")
    return header, arr
