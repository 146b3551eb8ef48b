import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from lorreg.bspline import prefilter, sample
from lorreg.estimator import LocallyOrderlessRegistration, as_image
from lorreg.grid import ImageGrid
from lorreg.histograms import grid_points
from lorreg.synth import smooth_random_field


def shifted_pair(dims=(40, 40), shift=(1.1, -0.7), seed=6):
    moving = smooth_random_field(dims, sigma=4.0, seed=seed)
    coeffs = prefilter(moving)
    pts = grid_points(dims) + np.asarray(shift)
    pts = np.clip(pts, 0, np.asarray(dims, dtype=float) - 1)
    fixed = ImageGrid(np.clip(sample(coeffs, pts), 0, 1).reshape(dims))
    return moving, fixed


def test_as_image_accepts_arrays_and_grids():
    arr = np.zeros((4, 4))
    img = as_image(arr)
    assert isinstance(img, ImageGrid)
    assert as_image(img) is img


def test_get_params_round_trips():
    est = LocallyOrderlessRegistration(measure="mi", sigma=2.0, bins=64)
    params = est.get_params()
    assert params["measure"] == "mi"
    assert params["sigma"] == 2.0
    est2 = LocallyOrderlessRegistration(**params)
    assert est2.get_params() == params


def test_clone_preserves_parameters():
    est = LocallyOrderlessRegistration(measure="ssd", beta=0.02, max_iter=7)
    c = clone(est)
    assert c.get_params() == est.get_params()


def test_set_params_chains():
    est = LocallyOrderlessRegistration().set_params(bins=16, measure="cc")
    assert est.bins == 16
    assert est.measure == "cc"


def test_predict_before_fit_raises():
    with pytest.raises(NotFittedError):
        LocallyOrderlessRegistration().predict()


def test_fit_recovers_translation():
    shift = (1.1, -0.7)
    moving, fixed = shifted_pair(shift=shift)
    est = LocallyOrderlessRegistration(measure="ssd", sigma=1.0, max_iter=100)
    est.fit(moving, fixed)
    np.testing.assert_allclose(est.predict(), shift, atol=0.05)
    assert est.trace_.n_iterations >= 1
    assert np.isfinite(est.value_)


def test_fit_rejects_mixed_dimensionality():
    with pytest.raises(ValueError):
        LocallyOrderlessRegistration().fit(np.zeros((8, 8)),
                                           np.zeros((8, 8, 8)))


def test_score_improves_after_fit():
    moving, fixed = shifted_pair()
    est = LocallyOrderlessRegistration(measure="ssd", sigma=1.0, max_iter=100)
    est.fit(moving, fixed)
    fitted_score = est.score(moving, fixed)
    unfitted = LocallyOrderlessRegistration(measure="ssd", sigma=1.0, max_iter=0)
    unfitted.fit(moving, fixed)
    assert fitted_score >= unfitted.score(moving, fixed)


def test_transform_image_reduces_residual():
    moving, fixed = shifted_pair()
    est = LocallyOrderlessRegistration(measure="ssd", sigma=1.0, max_iter=100)
    est.fit(moving, fixed)
    warped = est.transform_image(moving)
    inner = (slice(4, -4),) * 2
    before = np.mean((moving.values[inner] - fixed.values[inner]) ** 2)
    after = np.mean((warped.values[inner] - fixed.values[inner]) ** 2)
    assert after < 0.25 * before


def test_gpv_estimator_fits():
    moving, fixed = shifted_pair(dims=(32, 32), shift=(0.8, 0.0))
    est = LocallyOrderlessRegistration(measure="nmi", estimator="gpv",
                                       sigma=1.0, alpha=1.0, bins=16,
                                       max_iter=40)
    est.fit(moving, fixed)
    assert np.linalg.norm(est.predict() - np.array([0.8, 0.0])) < 0.5
