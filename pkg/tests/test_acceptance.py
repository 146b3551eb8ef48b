"""End-to-end numerical acceptance tests.

Each test verifies one headline property of the estimators, measures or
experiment harness at stated tolerances, against independent oracles
(closed forms, brute-force loops, finite differences) rather than against
the implementation's own outputs.
"""

import math
import time

import numpy as np
import pytest

from lorreg.bspline import prefilter, sample
from lorreg.flops import FlopModel
from lorreg.grid import ImageGrid
from lorreg.histograms import (GPV, PW, bin_centers, bin_index,
                               counting_histogram, gpv_joint, grid_points,
                               local_histogram, merge_bin_pairs, moments,
                               normalize, overlap_mask, parzen_marginal,
                               pw_joint_from_samples, soft_isophote)
from lorreg.kernels import (ScaleTriple, boxcar_kernel, bspline_kernel,
                            convolve, gaussian_kernel, kernel_eval,
                            parzen_gaussian)
from lorreg.measures import MeasureSpec, evaluate
from lorreg.objective import Objective, ObjectiveConfig
from lorreg.registration import register
from lorreg.synth import smooth_random_field
from lorreg.transforms import BSplineFFD, Rigid, Translation


def relerr(a, b):
    denom = max(abs(a), abs(b))
    return abs(a - b) / denom if denom > 0 else 0.0


# ---------------------------------------------------------------------------
# Parzen-window estimator symmetry

def test_pw_nmi_is_exactly_symmetric():
    """NMI under the PW estimator is invariant to swapping the images."""
    rng = np.random.default_rng(7)
    spec = MeasureSpec("nmi")
    parzen = parzen_gaussian(0.05)
    start = time.perf_counter()
    for _ in range(20):
        av = rng.uniform(0.0, 1.0, 900)
        bv = rng.uniform(0.0, 1.0, 900)
        fwd = evaluate(spec, pw_joint_from_samples(av, bv, parzen, 32))
        rev = evaluate(spec, pw_joint_from_samples(bv, av, parzen, 32))
        assert abs(fwd.value - rev.value) < 1e-12
    assert time.perf_counter() - start < 10.0


# ---------------------------------------------------------------------------
# Local-histogram moment identities

def test_local_histogram_moment_identities():
    """Mean and raw second moment of the local histogram equal the
    window-smoothed image and its squared counterpart plus beta^2."""
    beta, alpha = 0.05, 3.0
    scales = ScaleTriple(2.0, beta, alpha)
    img = smooth_random_field((64, 64), sigma=2.0, seed=3, low=0.15, high=0.85)
    w = gaussian_kernel(alpha)
    lw = convolve(img, w).values
    l2w = convolve(ImageGrid(img.values ** 2), w).values

    rng = np.random.default_rng(11)
    margin = 13  # window support radius 12 plus one: no boundary truncation
    checked = 0
    while checked < 50:
        x = rng.integers(margin, 64 - margin, size=2)
        mu_ref = lw[x[0], x[1]]
        if not 0.3 <= mu_ref <= 0.7:
            continue  # keep the intensity window clear of the [0, 1] edges
        h = local_histogram(img, x, scales, m=256)
        mom = moments(normalize(h), up_to=2)
        assert relerr(mom.raw[1], mu_ref) < 1e-3
        assert relerr(mom.raw[2], l2w[x[0], x[1]] + beta ** 2) < 1e-3
        checked += 1


# ---------------------------------------------------------------------------
# Soft-isophote scale composition

@pytest.mark.parametrize("slope", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("beta", [0.01, 0.05])
@pytest.mark.parametrize("alpha", [1.0, 2.0])
def test_isophote_width_composes_scales(slope, beta, alpha):
    """The soft isophote of a slope-a ramp, pooled at scale alpha, is a
    Gaussian profile of width sqrt(beta^2 / a^2 + alpha^2)."""
    n, cx = 64, 32
    x = np.arange(n, dtype=np.float64)
    vals = slope * (x[:, None] - cx) + 0.5 + 0.0 * x[None, :]
    img = ImageGrid(vals)
    iso = soft_isophote(img, 0.5, parzen_gaussian(beta))
    pooled = convolve(iso, gaussian_kernel(alpha)).values[:, n // 2]
    weights = pooled / pooled.sum()
    mu = float(x @ weights)
    std = math.sqrt(float(((x - mu) ** 2) @ weights))
    predicted = math.sqrt((beta / slope) ** 2 + alpha ** 2)
    assert relerr(std, predicted) < 0.01


# ---------------------------------------------------------------------------
# Analytic gradients against central finite differences

GRADIENT_TOLS = {"ssd": 1e-4, "lq": 1e-4, "huber": 1e-4,
                 "mi": 1e-3, "nmi": 1e-3, "cc": 1e-3}


def _grad_transforms(fixed_dims, rng):
    # every transform carries a bulk +3 voxel shift so all warped sample
    # points stay strictly inside the larger moving domain: the overlap
    # mask must not change across the finite-difference stencil
    translation = Translation(np.array([3.2, 2.85, 3.1]))
    rigid = Rigid(np.array([0.03, 0.02, -0.04, 3.25, 2.8, 3.15]),
                  [(n - 1) / 2.0 for n in fixed_dims])
    ffd = BSplineFFD.for_dims(fixed_dims, (4, 4, 4))
    ffd = ffd.with_params(rng.uniform(2.8, 3.2, ffd.n_params))
    return [translation, rigid, ffd]


def test_analytic_gradients_match_finite_differences():
    dims = (32, 32, 32)
    fixed_dims = (24, 24, 24)
    moving = smooth_random_field(dims, sigma=2.0, seed=11, low=0.1, high=0.9)
    fixed = smooth_random_field(fixed_dims, sigma=2.0, seed=12, low=0.1, high=0.9)
    rng = np.random.default_rng(99)
    transforms = _grad_transforms(fixed_dims, rng)
    eps = 1e-4
    start = time.perf_counter()
    for kind, tol in GRADIENT_TOLS.items():
        spec = MeasureSpec(kind, q=1.5) if kind == "lq" else MeasureSpec(kind)
        for estimator in (PW, GPV):
            alpha = math.inf if estimator == PW else 0.6
            cfg = ObjectiveConfig(measure=spec,
                                  scales=ScaleTriple(1.0, 0.05, alpha),
                                  estimator=estimator, bins=16,
                                  spatial_ssd=False, sample_count=4000,
                                  seed=5)
            objective = Objective(cfg, moving, fixed)
            for transform in transforms:
                params = transform.get_params()
                u = rng.standard_normal(params.size)
                u /= np.linalg.norm(u)
                warped = transform.apply(objective.points)
                dist = min(float(warped.min()),
                           float((np.asarray(dims) - 1.0 - warped).min()))
                assert dist > 10 * eps

                _, grad = objective.value_and_gradient(transform)
                analytic = float(grad @ u)
                hi = objective.value(transform.with_params(params + eps * u)).value
                lo = objective.value(transform.with_params(params - eps * u)).value
                fd = (hi - lo) / (2 * eps)
                assert relerr(analytic, fd) < tol, \
                    f"{kind}/{estimator}/{transform.kind}: {analytic} vs {fd}"
    assert time.perf_counter() - start < 120.0


# ---------------------------------------------------------------------------
# GPV optimum-offset asymmetry law

def _linear_fit(x, y):
    coeffs = np.polyfit(x, y, 1)
    pred = np.polyval(coeffs, x)
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    return float(coeffs[0]), 1.0 - ss_res / ss_tot


def test_gpv_asymmetry_grows_with_alpha_not_sigma(tmp_path):
    """The optimum-offset asymmetry of the GPV estimator increases linearly
    with the integration scale alpha and is insensitive to the measurement
    scale sigma; the PW control is exactly symmetric."""
    from lorreg.experiments import ExperimentConfig, run_asymmetry_sweep

    cfg = ExperimentConfig(dims=(64, 64), bins=32,
                           sigma_grid=(0.5, 1.0, 2.0, 4.0),
                           alpha_grid=(0.2, 0.5, 1.0, 1.5, 2.0), seed=0)
    start = time.perf_counter()
    path = run_asymmetry_sweep(cfg, tmp_path)
    assert time.perf_counter() - start < 300.0

    rows = [line.split(",") for line in path.read_text().splitlines()
            if line and not line.startswith("#")][1:]
    gpv = {(float(r[1]), float(r[2])): abs(float(r[5]))
           for r in rows if r[0] == "gpv"}
    pw = [float(r[5]) for r in rows if r[0] == "pw"]
    assert all(v == 0.0 for v in pw)

    alphas = np.array(cfg.alpha_grid)
    alpha_series = np.array([gpv[(cfg.asym_sigma, a)] for a in alphas])
    alpha_slope, r2 = _linear_fit(alphas, alpha_series)
    assert r2 > 0.9
    assert alpha_slope > 0

    sigmas = np.array(cfg.sigma_grid)
    sigma_series = np.array([gpv[(s, cfg.asym_alpha)] for s in sigmas])
    sigma_slope, _ = _linear_fit(sigmas, sigma_series)
    assert abs(sigma_slope) < 0.1 * alpha_slope


# ---------------------------------------------------------------------------
# Brute-force oracles

def test_pw_boxcar_equals_hard_counting():
    """With a boxcar intensity window of one bin width, the PW joint is the
    classic counting joint histogram, bin for bin."""
    rng = np.random.default_rng(21)
    m = 16
    av = rng.uniform(0.0, 0.999, 256)
    bv = rng.uniform(0.0, 0.999, 256)
    h = pw_joint_from_samples(av, bv, boxcar_kernel(1.0 / m), m)
    counted = np.zeros((m, m))
    np.add.at(counted, (bin_index(av, m), bin_index(bv, m)), 1.0)
    np.testing.assert_array_equal(h.joint, counted)


def test_gpv_joint_equals_triple_loop():
    """The scatter-based GPV joint agrees with the naive loop over every
    (sample, node) pair using the same compact window."""
    m = 16
    dims = (12, 12)
    moving = smooth_random_field(dims, sigma=1.0, seed=31, low=0.05, high=0.95)
    fixed = smooth_random_field(dims, sigma=1.0, seed=32, low=0.05, high=0.95)
    transform = Translation(np.array([0.3, -0.45]))
    window = bspline_kernel(1.0)
    h = gpv_joint(moving, fixed, transform, ScaleTriple(0.0, 1.0 / m, 1.0), m,
                  window=window)

    points = grid_points(dims)
    warped = transform.apply(points)
    mask = overlap_mask(warped, dims)
    fixed_bins = bin_index(fixed.values.ravel()[mask], m)
    node_bins = bin_index(moving.values, m)
    oracle = np.zeros((m, m))
    for pos, fb in zip(warped[mask], fixed_bins):
        for kx in range(dims[0]):
            for ky in range(dims[1]):
                wgt = float(kernel_eval(window, pos[0] - kx)
                            * kernel_eval(window, pos[1] - ky))
                oracle[node_bins[kx, ky], fb] += wgt
    np.testing.assert_allclose(h.joint, oracle, atol=1e-9)


def test_histogram_ssd_equals_voxel_ssd():
    """On bin-center-valued images with hard binning, SSD computed from the
    joint histogram equals the direct voxel-space SSD."""
    rng = np.random.default_rng(41)
    m = 16
    dims = (16, 16)
    centers = bin_centers(m)
    a = ImageGrid(centers[rng.integers(0, m, dims)], intensity_range=(0.0, 1.0))
    b = ImageGrid(centers[rng.integers(0, m, dims)], intensity_range=(0.0, 1.0))
    scales = ScaleTriple(0.0, 1.0 / m, math.inf)
    base = dict(scales=scales, estimator=PW, bins=m, parzen_family="boxcar")
    hist_cfg = ObjectiveConfig(measure=MeasureSpec("ssd"), spatial_ssd=False,
                               **base)
    vox_cfg = ObjectiveConfig(measure=MeasureSpec("ssd"), spatial_ssd=True,
                              **base)
    identity = Translation.identity(2)
    hist_val = Objective(hist_cfg, a, b).value(identity).value
    vox_val = Objective(vox_cfg, a, b).value(identity).value
    assert abs(hist_val - vox_val) < 1e-6


# ---------------------------------------------------------------------------
# Intensity-scale semigroup

def test_parzen_density_semigroup():
    """Widening the intensity window from beta0 to sqrt(beta0^2 + b^2) is
    the same as smoothing the beta0 density with a Gaussian of width b."""
    beta0, b = 0.02, 0.05
    m = 512
    rng = np.random.default_rng(51)
    values = rng.uniform(0.3, 0.7, 5000)
    wide = parzen_marginal(values, parzen_gaussian(math.hypot(beta0, b)), m)
    narrow = parzen_marginal(values, parzen_gaussian(beta0), m)

    radius = int(math.ceil(6 * b * m))
    taps = np.exp(-(np.arange(-radius, radius + 1) / m) ** 2 / (2 * b * b))
    taps /= taps.sum()
    smoothed = np.convolve(narrow.masses, taps, mode="same")
    l1 = float(np.abs(wide.masses - smoothed).sum())
    assert l1 < 1e-3


# ---------------------------------------------------------------------------
# Registration recovery

def _shifted_pair(dims, shift, seed):
    """Crop both images out of a larger canvas so the known shift holds
    exactly everywhere (no extrapolated edge bands)."""
    pad = 8
    canvas_dims = tuple(n + 2 * pad for n in dims)
    canvas = smooth_random_field(canvas_dims, sigma=4.0, seed=seed)
    coeffs = prefilter(canvas)
    base = grid_points(dims) + float(pad)
    fixed = ImageGrid(np.clip(sample(coeffs, base), 0, 1).reshape(dims))
    moving = ImageGrid(np.clip(sample(coeffs, base - np.asarray(shift)),
                               0, 1).reshape(dims))
    return moving, fixed


def test_recovers_translation_at_stated_tolerances():
    shift = (3.7, -1.2)
    moving, fixed = _shifted_pair((64, 64), shift, seed=5)
    start = time.perf_counter()
    # off-lattice random sampling keeps the overlap mask from changing a
    # whole voxel row at a time, which would put a step discontinuity right
    # at the integer-aligned starting point
    common = dict(scales=ScaleTriple(1.0, 0.03, 1.0), estimator=PW, bins=32,
                  sample_count=6000, seed=3)
    ssd_cfg = ObjectiveConfig(measure=MeasureSpec("ssd"), **common)
    nmi_cfg = ObjectiveConfig(measure=MeasureSpec("nmi"), **common)
    ssd = register(ssd_cfg, moving, fixed, Translation.identity(2), max_iter=200)
    nmi = register(nmi_cfg, moving, fixed, Translation.identity(2), max_iter=200,
                   grad_tol_scale=1e-4)
    np.testing.assert_allclose(ssd.transform.get_params(), shift, atol=0.05)
    np.testing.assert_allclose(nmi.transform.get_params(), shift, atol=0.1)
    assert time.perf_counter() - start < 60.0


# ---------------------------------------------------------------------------
# Evaluation cost

def test_pw_nmi_runtime_ratio_and_flop_model():
    """The measured PW-NMI / SSD time ratio stays below 1.5 at a million
    samples and 256 bins; the closed-form flop model puts it at 1.17.

    Published absolute seconds for this workload (1.21 s SSD, 1.63 s NMI,
    measured ratio 1.34 on 2011 hardware) are hardware-bound and are not
    reproduced here; only the model ratio and a generous bound on the
    measured ratio are checked.
    """
    n, m = 1_000_000, 256
    model = FlopModel(n_samples=n, bins=m)
    assert model.ratio_to_ssd("pw_nmi") == pytest.approx(1.17, abs=0.01)

    dims = (48, 48, 48)
    moving = smooth_random_field(dims, sigma=2.0, seed=61, low=0.05, high=0.95)
    fixed = smooth_random_field(dims, sigma=2.0, seed=62, low=0.05, high=0.95)
    scales = ScaleTriple(0.0, 1.0 / m, 1.0)
    common = dict(scales=scales, bins=m, sample_count=n, seed=0,
                  parzen_family="cubic_bspline")
    setups = {
        "ssd": ObjectiveConfig(measure=MeasureSpec("ssd"), **common),
        "pw_nmi": ObjectiveConfig(measure=MeasureSpec("nmi"), estimator=PW,
                                  **common),
    }
    transform = Translation(np.full(3, 0.25))
    best = {}
    for name, cfg in setups.items():
        objective = Objective(cfg, moving, fixed)
        objective.value_and_gradient(transform)  # warm up
        times = []
        for _ in range(3):
            t0 = time.perf_counter()
            objective.value_and_gradient(transform)
            times.append(time.perf_counter() - t0)
        best[name] = min(times)
    assert best["pw_nmi"] / best["ssd"] <= 1.5


# ---------------------------------------------------------------------------
# Bin merging

def test_merging_bin_pairs_equals_half_resolution():
    for seed in range(10):
        img = smooth_random_field((20, 20), sigma=1.0, seed=seed,
                                  low=0.0, high=1.0)
        merged = merge_bin_pairs(counting_histogram(img, 8))
        coarse = counting_histogram(img, 4)
        np.testing.assert_array_equal(merged.bins, coarse.bins)


# ---------------------------------------------------------------------------
# Direction divergence of the GPV estimator

def test_gpv_direction_divergence_report(tmp_path):
    """The GPV joint density differs between the two registration
    directions: the divergence is positive, grows with sigma, and vanishes
    as the integration scale goes to zero.

    Reference divergences of 0.10005 (sigma=1) and 0.27105 (sigma=4) were
    reported for a proprietary clinical MRI collection and cannot be
    reproduced; the synthetic follow-up pair used here checks the
    qualitative law instead (and the artifact header records the quoted
    values as non-reproduced context).
    """
    from lorreg.experiments import ExperimentConfig, run_joint_density_report

    cfg = ExperimentConfig(dims=(64, 64), bins=32, sigma_grid=(1.0, 4.0),
                           alpha_grid=(0.05, 0.2, 0.5, 1.0, 2.0), seed=0)
    path = run_joint_density_report(cfg, tmp_path)
    text = path.read_text()
    assert "reference_jsd_not_reproduced" in text

    rows = [line.split(",") for line in text.splitlines()
            if line and not line.startswith("#")][1:]
    sigma_jsd = {}
    decay = []
    for estimator, sigma, alpha, jsd in rows:
        jsd = float(jsd)
        if estimator == "gpv":
            assert jsd > 0.0
            sigma_jsd[float(sigma)] = jsd
        elif estimator == "gpv_alpha_decay":
            decay.append((float(alpha), jsd))
    assert sigma_jsd[4.0] > sigma_jsd[1.0]

    decay.sort(reverse=True)  # large alpha first
    values = [jsd for _, jsd in decay]
    assert values[-1] < 0.1 * values[0]
    assert all(b <= a * 1.05 for a, b in zip(values, values[1:]))
