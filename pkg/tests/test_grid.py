import numpy as np
import pytest

from lorreg.grid import GridError, ImageGrid, load_image, load_pgm, save_image, save_pgm


def test_rejects_1d_and_tiny_axes():
    with pytest.raises(GridError):
        ImageGrid(np.zeros(10))
    with pytest.raises(GridError):
        ImageGrid(np.zeros((3, 8)))
    with pytest.raises(GridError):
        ImageGrid(np.zeros((4, 4, 4, 4)))


def test_rejects_non_finite():
    vals = np.zeros((5, 5))
    vals[2, 2] = np.nan
    with pytest.raises(GridError):
        ImageGrid(vals)


def test_intensity_range_must_bracket_values():
    with pytest.raises(GridError):
        ImageGrid(np.full((4, 4), 2.0), intensity_range=(0.0, 1.0))


def test_default_spacing_and_range(rng):
    vals = rng.uniform(0.2, 0.8, (6, 7))
    img = ImageGrid(vals)
    assert img.spacing == (1.0, 1.0)
    assert img.intensity_range == (vals.min(), vals.max())
    assert img.dims == (6, 7)


def test_normalized_maps_range_to_unit_interval(rng):
    vals = rng.uniform(-3.0, 5.0, (8, 8))
    norm = ImageGrid(vals).normalized()
    assert norm.intensity_range == (0.0, 1.0)
    assert norm.values.min() == pytest.approx(0.0, abs=1e-15)
    assert norm.values.max() == pytest.approx(1.0, abs=1e-15)
    # affine: ordering and relative spacing preserved
    flat, nflat = vals.ravel(), norm.values.ravel()
    assert np.allclose(np.argsort(flat), np.argsort(nflat))


def test_normalize_constant_image_fails():
    with pytest.raises(GridError):
        ImageGrid(np.full((5, 5), 0.5)).normalized()


def test_values_are_immutable(rng):
    img = ImageGrid(rng.uniform(0, 1, (5, 5)))
    with pytest.raises(ValueError):
        img.values[0, 0] = 2.0


def test_image_io_roundtrip(tmp_path, rng):
    vals = rng.uniform(0.0, 1.0, (7, 6, 5)).astype(np.float32).astype(np.float64)
    img = ImageGrid(vals, spacing=(1.0, 2.0, 0.5), intensity_range=(0.0, 1.0))
    save_image(img, tmp_path / "vol.img")
    back = load_image(tmp_path / "vol.img")
    assert back.dims == img.dims
    assert back.spacing == img.spacing
    assert back.intensity_range == img.intensity_range
    np.testing.assert_array_equal(back.values, img.values)


def test_image_io_rejects_wrong_payload(tmp_path, rng):
    img = ImageGrid(rng.uniform(0, 1, (6, 6)))
    save_image(img, tmp_path / "a.img")
    (tmp_path / "a.raw").write_bytes(b"\x00" * 12)
    with pytest.raises(GridError):
        load_image(tmp_path / "a.img")


def test_pgm_roundtrip(tmp_path, rng):
    vals = rng.uniform(0.0, 1.0, (9, 5))
    img = ImageGrid(vals, intensity_range=(0.0, 1.0))
    save_pgm(img, tmp_path / "a.pgm")
    back = load_pgm(tmp_path / "a.pgm")
    assert back.dims == img.dims
    # 16-bit quantization
    assert np.max(np.abs(back.values - img.values)) <= 0.5 / 65535 + 1e-12


def test_pgm_rejects_3d(tmp_path, rng):
    img = ImageGrid(rng.uniform(0, 1, (4, 4, 4)))
    with pytest.raises(GridError):
        save_pgm(img, tmp_path / "a.pgm")
