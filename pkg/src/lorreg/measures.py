"""Similarity measures over joint histograms and their analytic gradients
with respect to the (unnormalized) histogram entries.

Measures come in two flavors: linear losses, which contract a fixed loss
surface F(i, j) against the joint density (SSD-as-histogram, q-norms,
hinge/Huber/truncated variants), and nonlinear information measures
computed from entropies or moments of the density (MI, NMI, CC) plus the
segment-based correlation ratio.  Entropies use natural logs on bin
masses.  All gradients include the normalization quotient rule, so they
are valid derivatives w.r.t. raw accumulated histogram weights.

Sign convention: the optimizer always minimizes.  ``MeasureValue.raw``
keeps the conventional orientation (MI/NMI/CC large = similar); ``value``
is the minimization-signed objective (information measures negated).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import ImageGrid
from .histograms import JointHistogram, bin_centers, bin_index

#: Clamp applied inside logarithms so empty bins keep finite gradients.
P_MIN = 1e-12

LINEAR_KINDS = ("ssd", "lq", "hinge", "huber", "trunc")
NONLINEAR_KINDS = ("mi", "nmi", "cc")


class MeasureError(ValueError):
    pass


class DegenerateHistogramError(MeasureError):
    pass


@dataclass(frozen=True)
class MeasureSpec:
    """Which measure to evaluate and its parameters."""

    kind: str
    q: float = 2.0
    k_loss: float = 0.1

    def __post_init__(self):
        if self.kind not in LINEAR_KINDS + NONLINEAR_KINDS + ("cr",):
            raise MeasureError(f"unknown measure kind {self.kind!r}")
        if self.q < 0:
            raise MeasureError("q must be >= 0")
        if self.kind in ("hinge", "huber", "trunc") and not self.k_loss > 0:
            raise MeasureError("k_loss must be > 0")

    @property
    def is_linear(self) -> bool:
        return self.kind in LINEAR_KINDS


@dataclass(frozen=True)
class MeasureValue:
    value: float                       # minimization-signed
    raw: float                         # conventional orientation
    entropies: tuple | None = None     # (H_I, H_R, H_IR) for MI/NMI
    moments: tuple | None = None       # (mu_I, mu_R, sigma_I, sigma_R) for CC


@dataclass(frozen=True)
class HistogramGradient:
    """Sensitivities of the minimization-signed value w.r.t. the raw joint
    histogram entries, normalization chain included."""

    d_joint: np.ndarray


def entropy(masses: np.ndarray) -> float:
    """Shannon entropy (natural log) of probability masses, 0 ln 0 = 0."""
    w = np.asarray(masses, dtype=np.float64)
    total = w.sum()
    if abs(total - 1.0) > 1e-6:
        raise MeasureError(f"entropy input is not normalized (mass {total})")
    nz = w > 0
    return float(-np.sum(w[nz] * np.log(w[nz])))


def loss_surface(spec: MeasureSpec, m: int) -> np.ndarray:
    """The (M, M) loss values F(i_m, j_n) of a linear measure."""
    centers = bin_centers(m)
    d = np.abs(np.subtract.outer(centers, centers))
    q, k = spec.q, spec.k_loss
    if spec.kind == "ssd":
        return d ** 2
    if spec.kind == "lq":
        return d ** q
    if spec.kind == "hinge":
        return np.maximum(d - k, 0.0) ** q
    if spec.kind == "huber":
        return np.where(d < k, d ** q, q * k ** (q - 1) * d - (q - 1) * k ** q)
    if spec.kind == "trunc":
        return np.where(d < k, d ** q, k ** q)
    raise MeasureError(f"{spec.kind!r} is not a linear measure")


def _entropies(w: np.ndarray):
    wi = w.sum(axis=1)
    wj = w.sum(axis=0)
    return entropy(wi), entropy(wj), entropy(w.ravel())


def _cc_stats(w: np.ndarray, m: int):
    centers = bin_centers(m)
    wi = w.sum(axis=1)
    wj = w.sum(axis=0)
    mu_i = float(centers @ wi)
    mu_j = float(centers @ wj)
    var_i = float(((centers - mu_i) ** 2) @ wi)
    var_j = float(((centers - mu_j) ** 2) @ wj)
    if var_i <= 0 or var_j <= 0:
        raise DegenerateHistogramError("zero marginal variance; CC undefined")
    cov = float((centers - mu_i) @ w @ (centers - mu_j))
    return mu_i, mu_j, math.sqrt(var_i), math.sqrt(var_j), cov


def evaluate(spec: MeasureSpec, h: JointHistogram) -> MeasureValue:
    """Evaluate a measure on a joint histogram (normalizes a copy if raw)."""
    w = h.masses
    m = h.bin_count
    if spec.is_linear:
        val = float(np.sum(loss_surface(spec, m) * w))
        return MeasureValue(value=val, raw=val)
    if spec.kind == "cc":
        mu_i, mu_j, s_i, s_j, cov = _cc_stats(w, m)
        raw = cov / (s_i * s_j)
        return MeasureValue(value=-raw, raw=raw,
                            moments=(mu_i, mu_j, s_i, s_j))
    h_i, h_j, h_ij = _entropies(w)
    if spec.kind == "mi":
        raw = h_i + h_j - h_ij
        return MeasureValue(value=-raw, raw=raw, entropies=(h_i, h_j, h_ij))
    if spec.kind == "nmi":
        if h_ij <= 0:
            raise DegenerateHistogramError(
                "zero joint entropy (constant images); NMI undefined")
        raw = (h_i + h_j) / h_ij
        return MeasureValue(value=-raw, raw=raw, entropies=(h_i, h_j, h_ij))
    raise MeasureError(f"cannot evaluate {spec.kind!r} on a joint histogram")


def _raw_partials(spec: MeasureSpec, w: np.ndarray, m: int) -> np.ndarray:
    """dV/dw with all entries treated as independent, V minimization-signed."""
    if spec.is_linear:
        return loss_surface(spec, m)
    if spec.kind == "cc":
        centers = bin_centers(m)
        mu_i, mu_j, s_i, s_j, cov = _cc_stats(w, m)
        u = centers - mu_i
        v = centers - mu_j
        raw = cov / (s_i * s_j)
        g = (np.outer(u, v) / (s_i * s_j)
             - raw * (np.add.outer(u * u / (2 * s_i ** 2),
                                   v * v / (2 * s_j ** 2))))
        return -g
    wi = w.sum(axis=1)
    wj = w.sum(axis=0)
    log_w = np.log(np.maximum(w, P_MIN))
    log_wi = np.log(np.maximum(wi, P_MIN))
    log_wj = np.log(np.maximum(wj, P_MIN))
    if spec.kind == "mi":
        g = (log_w + 1.0) - np.add.outer(log_wi + 1.0, log_wj + 1.0)
        return -g
    if spec.kind == "nmi":
        h_i, h_j, h_ij = _entropies(w)
        if h_ij <= 0:
            raise DegenerateHistogramError("zero joint entropy; NMI undefined")
        d_num = -np.add.outer(log_wi + 1.0, log_wj + 1.0)
        d_den = -(log_w + 1.0)
        g = (d_num * h_ij - (h_i + h_j) * d_den) / (h_ij * h_ij)
        return -g
    raise MeasureError(f"no histogram gradient for {spec.kind!r}")


def gradient_wrt_histogram(spec: MeasureSpec, h: JointHistogram) -> HistogramGradient:
    """Gradient of the minimization-signed measure w.r.t. raw joint entries.

    For raw weights with total mass S and masses w = h/S the chain rule
    gives d/dh = (g - <g, w>) / S, the mass-conservation projection of the
    per-mass partials g; for linear measures at S = 1 this is exactly
    F(i, j) - value.
    """
    total = float(np.sum(h.joint))
    if total <= 0:
        raise DegenerateHistogramError("empty histogram")
    w = h.joint / total
    g = _raw_partials(spec, w, h.bin_count)
    d = (g - float(np.sum(g * w))) / total
    return HistogramGradient(d_joint=d)


def evaluate_cr(segments: np.ndarray, target: ImageGrid, m: int) -> MeasureValue:
    """Correlation ratio of a target image against a hard segmentation.

    Computed from per-segment histograms of the bin-quantized intensities;
    the ANOVA identity makes the between-class and one-minus-within forms
    agree exactly.
    """
    labels = segments.values if isinstance(segments, ImageGrid) else np.asarray(segments)
    labels = labels.astype(np.int64).ravel()
    vals = target.normalized().values.ravel() \
        if target.intensity_range != (0.0, 1.0) else target.values.ravel()
    if labels.shape != vals.shape:
        raise MeasureError("segment image and target must share a grid")
    centers = bin_centers(m)
    q = centers[bin_index(vals, m)]
    mu = q.mean()
    var = q.var()
    if var <= 0:
        raise DegenerateHistogramError("zero target variance; CR undefined")
    uniq = np.unique(labels)
    between = 0.0
    for lab in uniq:
        sel = q[labels == lab]
        between += sel.size / q.size * (sel.mean() - mu) ** 2
    raw = between / var
    return MeasureValue(value=-raw, raw=raw, moments=(mu, mu, math.sqrt(var), math.sqrt(var)))


def cr_within_form(segments, target: ImageGrid, m: int) -> float:
    """The 1 - within/total form of the correlation ratio (oracle twin)."""
    labels = segments.values if isinstance(segments, ImageGrid) else np.asarray(segments)
    labels = labels.astype(np.int64).ravel()
    vals = target.normalized().values.ravel() \
        if target.intensity_range != (0.0, 1.0) else target.values.ravel()
    centers = bin_centers(m)
    q = centers[bin_index(vals, m)]
    var = q.var()
    if var <= 0:
        raise DegenerateHistogramError("zero target variance; CR undefined")
    within = 0.0
    for lab in np.unique(labels):
        sel = q[labels == lab]
        within += sel.size / q.size * sel.var()
    return 1.0 - within / var
