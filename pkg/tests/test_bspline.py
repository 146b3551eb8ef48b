import numpy as np
import pytest

from lorreg.bspline import prefilter, reconstruct, sample
from lorreg.grid import ImageGrid


def grid_pts(dims):
    grids = np.meshgrid(*(np.arange(n, dtype=np.float64) for n in dims),
                        indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def test_prefilter_interpolates_grid_values(rng):
    img = ImageGrid(rng.uniform(0, 1, (9, 8)))
    coeffs = prefilter(img)
    vals = sample(coeffs, grid_pts(img.dims))
    np.testing.assert_allclose(vals, img.values.ravel(), atol=1e-10)


def test_prefilter_interpolates_3d(rng):
    img = ImageGrid(rng.uniform(0, 1, (6, 5, 7)))
    coeffs = prefilter(img)
    vals = sample(coeffs, grid_pts(img.dims))
    np.testing.assert_allclose(vals, img.values.ravel(), atol=1e-10)


def test_constant_image_sampled_anywhere(rng):
    img = ImageGrid(np.full((8, 8), 0.37))
    coeffs = prefilter(img)
    pts = rng.uniform(0, 7, (50, 2))
    np.testing.assert_allclose(sample(coeffs, pts), 0.37, atol=1e-12)


def test_linear_ramp_reproduced_in_interior(rng):
    # mirror boundary handling perturbs a non-symmetric ramp near the edges;
    # the perturbation decays geometrically (~0.27 per voxel) into the interior
    x = np.arange(24, dtype=np.float64)
    img = ImageGrid(np.add.outer(0.02 * x, 0.01 * x))
    coeffs = prefilter(img)
    pts = rng.uniform(8.0, 15.0, (40, 2))
    expect = 0.02 * pts[:, 0] + 0.01 * pts[:, 1]
    np.testing.assert_allclose(sample(coeffs, pts), expect, atol=1e-7)


def test_gradient_matches_finite_differences(rng):
    img = ImageGrid(rng.uniform(0, 1, (10, 11)))
    coeffs = prefilter(img)
    pts = rng.uniform(1.5, 8.5, (30, 2))
    vals, grads = sample(coeffs, pts, want_gradient=True)
    h = 1e-6
    for d in range(2):
        lo, hi = pts.copy(), pts.copy()
        lo[:, d] -= h
        hi[:, d] += h
        fd = (sample(coeffs, hi) - sample(coeffs, lo)) / (2 * h)
        np.testing.assert_allclose(grads[:, d], fd, atol=1e-6)


def test_mirror_boundary_symmetry(rng):
    img = ImageGrid(rng.uniform(0, 1, (8, 8)))
    coeffs = prefilter(img)
    t = rng.uniform(0.05, 0.45, 10)
    inside = np.stack([t, np.full_like(t, 3.0)], axis=1)
    outside = np.stack([-t, np.full_like(t, 3.0)], axis=1)
    np.testing.assert_allclose(sample(coeffs, outside), sample(coeffs, inside),
                               atol=1e-10)


def test_reconstruct_roundtrip(rng):
    img = ImageGrid(rng.uniform(0, 1, (7, 9)))
    coeffs = prefilter(img)
    np.testing.assert_allclose(reconstruct(coeffs), img.values, atol=1e-10)


def test_sample_rejects_wrong_point_shape(rng):
    coeffs = prefilter(ImageGrid(rng.uniform(0, 1, (6, 6))))
    with pytest.raises(ValueError):
        sample(coeffs, np.zeros((4, 3)))
