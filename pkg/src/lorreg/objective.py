"""Assembly of measure values and analytic parameter gradients.

The chain runs measure -> joint histogram -> sampled intensities ->
transform parameters.  For the PW estimator the intensity window is
differentiated at the warped sample values; for GPV the derivative passes
through the spatial integration window at the warped positions.  A direct
voxel-loop fast path evaluates SSD without histograms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bspline import InterpolantCoefficients, prefilter, sample
from .grid import ImageGrid
from .histograms import (JointHistogram, PW, GPV, bin_centers, bin_index,
                         grid_points, overlap_mask, gpv_scatter)
from .kernels import (KernelSpec, ScaleTriple, kernel_eval, kernel_eval_deriv,
                      parzen_gaussian, boxcar_kernel, smooth,
                      GAUSSIAN, CUBIC_BSPLINE, BOXCAR, gaussian_kernel)
from .measures import MeasureSpec, MeasureValue, evaluate, gradient_wrt_histogram
from .transforms import Transform


class ObjectiveError(ValueError):
    pass


@dataclass(frozen=True)
class ObjectiveConfig:
    """What to evaluate: measure, estimator, scales and sampling policy."""

    measure: MeasureSpec
    scales: ScaleTriple
    estimator: str = PW
    bins: int = 64
    parzen_family: str = GAUSSIAN      # intensity window family for PW
    window_family: str = GAUSSIAN      # integration window family for GPV
    spatial_ssd: bool = True           # direct voxel loop for kind == "ssd"
    sample_count: int | None = None    # None = all fixed voxel centers
    seed: int = 0

    def __post_init__(self):
        if self.estimator not in (PW, GPV):
            raise ObjectiveError(f"unknown estimator {self.estimator!r}")
        if self.estimator == GPV and not math.isfinite(self.scales.alpha):
            raise ObjectiveError("GPV needs a finite integration scale")

    def parzen(self) -> KernelSpec:
        beta = self.scales.beta
        if self.parzen_family == GAUSSIAN:
            return parzen_gaussian(beta)
        if self.parzen_family == CUBIC_BSPLINE:
            return KernelSpec(CUBIC_BSPLINE, beta, normalized=False)
        if self.parzen_family == BOXCAR:
            return boxcar_kernel(beta)
        raise ObjectiveError(f"unknown intensity window family {self.parzen_family!r}")

    def window(self) -> KernelSpec:
        if self.window_family == GAUSSIAN:
            return gaussian_kernel(self.scales.alpha)
        if self.window_family == CUBIC_BSPLINE:
            return KernelSpec(CUBIC_BSPLINE, self.scales.alpha)
        raise ObjectiveError(f"unknown integration window family {self.window_family!r}")


def prepare(image: ImageGrid, sigma: float):
    """Smooth at the measurement scale, normalize to [0, 1], prefilter."""
    smoothed = smooth(image, sigma)
    lo, hi = image.intensity_range
    if hi > lo:
        vals = np.clip((smoothed.values - lo) / (hi - lo), 0.0, 1.0)
    else:
        raise ObjectiveError("degenerate intensity range")
    norm = ImageGrid(vals, spacing=image.spacing, intensity_range=(0.0, 1.0))
    return norm, prefilter(norm)


class Objective:
    """Callable similarity objective for a fixed image pair and config.

    Precomputes everything transform-independent (smoothed normalized
    images, spline coefficients, fixed-side window weights) so repeated
    evaluations during optimization only pay for the moving side.
    """

    def __init__(self, config: ObjectiveConfig, moving: ImageGrid, fixed: ImageGrid):
        self.config = config
        sigma = config.scales.sigma
        self.moving_img, self.moving_coeffs = prepare(moving, sigma)
        self.fixed_img, fixed_coeffs = prepare(fixed, sigma)
        m = config.bins

        if config.sample_count is None:
            self.points = grid_points(self.fixed_img.dims)
            self.fixed_vals = self.fixed_img.values.ravel()
        else:
            rng = np.random.default_rng(np.uint64(config.seed))
            dims = np.asarray(self.fixed_img.dims, dtype=np.float64)
            self.points = rng.uniform(0.0, dims - 1.0,
                                      size=(config.sample_count, len(dims)))
            self.fixed_vals = np.clip(sample(fixed_coeffs, self.points), 0.0, 1.0)

        if config.estimator == PW:
            self._parzen = config.parzen()
            self._fixed_win = self._window_weights(self.fixed_vals, deriv=False)
        else:
            self._window = config.window()
            self.node_bins = bin_index(self.moving_img.values, m)
            self.fixed_bins = bin_index(self.fixed_vals, m)

    # -- intensity window weights ------------------------------------------

    def _sparse_taps(self, values, deriv):
        """Per-sample window weights on the few bins inside the support.

        Returns (bin indices (P, T), weights (P, T)[, dweights]) with
        indices clipped into range and out-of-support weights zero.
        """
        m = self.config.bins
        spec = self._parzen
        u = values * m - 0.5                     # position in bin-center units
        base = np.floor(u).astype(np.int64)
        if spec.family == BOXCAR:
            offs = np.array([0])
            radius = 1
        else:
            radius = max(1, int(math.ceil(spec.support_radius * m)))
            offs = np.arange(-radius + 1, radius + 1)
        idx = base[:, None] + offs[None, :]
        arg = (values[:, None] - (idx + 0.5) / m)
        if spec.family == BOXCAR:
            # hard binning: single bin per sample
            idx = bin_index(values, m)[:, None]
            w = np.ones_like(idx, dtype=np.float64)
            inb = np.ones_like(w, dtype=bool)
            dw = np.zeros_like(w)
        else:
            inb = (idx >= 0) & (idx < m)
            w = kernel_eval(spec, arg) * inb
            dw = kernel_eval_deriv(spec, arg) * inb if deriv else None
        idx = np.clip(idx, 0, m - 1)
        if deriv:
            return idx, w, dw
        return idx, w

    def _window_weights(self, values, deriv):
        if self._parzen.family == GAUSSIAN:
            centers = bin_centers(self.config.bins)
            arg = np.subtract.outer(values, centers)
            w = kernel_eval(self._parzen, arg)
            if deriv:
                return ("dense", w, kernel_eval_deriv(self._parzen, arg))
            return ("dense", w)
        out = self._sparse_taps(values, deriv)
        return ("sparse",) + tuple(out)

    # -- evaluation --------------------------------------------------------

    def histogram(self, transform: Transform) -> JointHistogram:
        """The joint histogram at the given transform (no gradients)."""
        if self.config.estimator == PW:
            h, _ = self._pw_pass(transform, want_gradient=False)
        else:
            h, _ = self._gpv_pass(transform, want_gradient=False)
        return h

    def value(self, transform: Transform) -> MeasureValue:
        if self.config.measure.kind == "ssd" and self.config.spatial_ssd:
            v, _ = self._ssd_spatial(transform, want_gradient=False)
            return v
        return evaluate(self.config.measure, self.histogram(transform))

    def value_and_gradient(self, transform: Transform):
        """Minimization-signed value and its analytic parameter gradient."""
        if self.config.measure.kind == "ssd" and self.config.spatial_ssd:
            v, g = self._ssd_spatial(transform, want_gradient=True)
            return v.value, g
        if self.config.estimator == PW:
            return self._pw_value_and_gradient(transform)
        return self._gpv_value_and_gradient(transform)

    def __call__(self, transform: Transform):
        return self.value_and_gradient(transform)

    # -- SSD fast path -----------------------------------------------------

    def _ssd_spatial(self, transform, want_gradient):
        warped = transform.apply(self.points)
        mask = overlap_mask(warped, self.moving_img.dims)
        n = int(mask.sum())
        if n == 0:
            raise ObjectiveError("no overlap between the images")
        if want_gradient:
            iv, grads = sample(self.moving_coeffs, warped[mask], want_gradient=True)
        else:
            iv = sample(self.moving_coeffs, warped[mask])
        resid = iv - self.fixed_vals[mask]
        value = float(resid @ resid) / n
        mv = MeasureValue(value=value, raw=value)
        if not want_gradient:
            return mv, None
        cot = (2.0 / n) * resid[:, None] * grads
        return mv, transform.adjoint(self.points[mask], cot)

    # -- PW ----------------------------------------------------------------

    def _pw_pass(self, transform, want_gradient):
        warped = transform.apply(self.points)
        mask = overlap_mask(warped, self.moving_img.dims)
        if not mask.any():
            raise ObjectiveError("no overlap between the images")
        if want_gradient:
            iv, grads = sample(self.moving_coeffs, warped[mask], want_gradient=True)
        else:
            iv, grads = sample(self.moving_coeffs, warped[mask]), None
        moving_win = self._window_weights(iv, deriv=want_gradient)
        m = self.config.bins
        fixed_win = (self._fixed_win[0],) + tuple(part[mask]
                                                  for part in self._fixed_win[1:])
        if moving_win[0] == "dense":
            joint = moving_win[1].T @ fixed_win[1]
        else:
            mi, mw = moving_win[1], moving_win[2]
            fi, fw = fixed_win[1], fixed_win[2]
            joint = np.zeros(m * m)
            for a in range(mi.shape[1]):
                for b in range(fi.shape[1]):
                    flat = mi[:, a] * m + fi[:, b]
                    joint += np.bincount(flat, weights=mw[:, a] * fw[:, b],
                                         minlength=m * m)
            joint = joint.reshape(m, m)
        h = JointHistogram(joint=joint, estimator=PW, scales=self.config.scales,
                           sample_count=int(mask.sum()))
        state = (mask, grads, moving_win, fixed_win)
        return h, state

    def _pw_value_and_gradient(self, transform):
        h, state = self._pw_pass(transform, want_gradient=True)
        mask, grads, moving_win, fixed_win = state
        mv = evaluate(self.config.measure, h)
        d = gradient_wrt_histogram(self.config.measure, h).d_joint
        if moving_win[0] == "dense":
            _, _, dmw = moving_win
            fw = fixed_win[1]
            back = fw @ d.T                      # (P, M) over moving bins
            sens = np.einsum("pm,pm->p", dmw, back)
        else:
            _, mi, mw, dmw = moving_win
            _, fi, fw = fixed_win
            sens = np.zeros(mi.shape[0])
            for a in range(mi.shape[1]):
                for b in range(fi.shape[1]):
                    sens += dmw[:, a] * fw[:, b] * d[mi[:, a], fi[:, b]]
        cot = sens[:, None] * grads
        return mv.value, transform.adjoint(self.points[mask], cot)

    # -- GPV ---------------------------------------------------------------

    def _gpv_pass(self, transform, want_gradient):
        warped = transform.apply(self.points)
        mask = overlap_mask(warped, self.moving_img.dims)
        if not mask.any():
            raise ObjectiveError("no overlap between the images")
        joint = gpv_scatter(self.node_bins, warped[mask], self.fixed_bins[mask],
                            self._window, self.config.bins)
        h = JointHistogram(joint=joint, estimator=GPV, scales=self.config.scales,
                           sample_count=int(mask.sum()))
        return h, (mask, warped)

    def _gpv_value_and_gradient(self, transform):
        h, (mask, warped) = self._gpv_pass(transform, want_gradient=True)
        mv = evaluate(self.config.measure, h)
        d = gradient_wrt_histogram(self.config.measure, h).d_joint
        cot = self._gpv_cotangent(warped[mask], self.fixed_bins[mask], d)
        return mv.value, transform.adjoint(self.points[mask], cot)

    def _gpv_cotangent(self, warped, fixed_bins, d):
        """Second scatter pass: chain the histogram sensitivities through
        the spatial derivative of the integration window."""
        spec = self._window
        dims = self.node_bins.shape
        ndim = self.node_bins.ndim
        base = np.floor(warped).astype(np.int64)
        radius = int(math.ceil(spec.support_radius))
        if spec.family == CUBIC_BSPLINE:
            radius = max(0, radius - 1)
        offsets = np.meshgrid(*([np.arange(-radius, radius + 2)] * ndim),
                              indexing="ij")
        offsets = np.stack([o.ravel() for o in offsets], axis=1)
        cot = np.zeros_like(warped)
        for off in offsets:
            nodes = base + off
            valid = np.ones(len(nodes), dtype=bool)
            for dd in range(ndim):
                valid &= (nodes[:, dd] >= 0) & (nodes[:, dd] < dims[dd])
            if not valid.any():
                continue
            nd = nodes[valid]
            args = warped[valid] - nd
            per_axis = [kernel_eval(spec, args[:, dd]) for dd in range(ndim)]
            dper_axis = [kernel_eval_deriv(spec, args[:, dd]) for dd in range(ndim)]
            coeff = d[self.node_bins[tuple(nd[:, dd] for dd in range(ndim))],
                      fixed_bins[valid]]
            for gdim in range(ndim):
                w = coeff.copy()
                for dd in range(ndim):
                    w *= dper_axis[dd] if dd == gdim else per_axis[dd]
                cot[valid, gdim] += w
        return cot
