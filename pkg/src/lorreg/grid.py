"""Scalar images on regular grids, with simple file I/O.

Images are 2D or 3D arrays of finite reals indexed ``values[x, y(, z)]``
(axis 0 is x).  ``intensity_range`` records the span of the codomain used
when mapping intensities to the normalized [0, 1] scale that all histogram
code operates on.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MIN_AXIS = 4  # cubic interpolation needs a 4-voxel support


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class ImageGrid:
    """An N-dimensional scalar image (N = 2 or 3) on a regular grid."""

    values: np.ndarray
    spacing: tuple[float, ...] = None
    intensity_range: tuple[float, float] = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim not in (2, 3):
            raise GridError(f"expected a 2D or 3D image, got ndim={values.ndim}")
        if any(n < MIN_AXIS for n in values.shape):
            raise GridError(f"every axis must have >= {MIN_AXIS} voxels, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise GridError("image contains non-finite values")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.spacing is None:
            object.__setattr__(self, "spacing", (1.0,) * values.ndim)
        else:
            object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))
        if len(self.spacing) != values.ndim:
            raise GridError("spacing length must match image dimensionality")
        if self.intensity_range is None:
            lo, hi = float(values.min()), float(values.max())
            object.__setattr__(self, "intensity_range", (lo, hi))
        else:
            lo, hi = (float(v) for v in self.intensity_range)
            object.__setattr__(self, "intensity_range", (lo, hi))
        if not (lo <= values.min() and values.max() <= hi):
            raise GridError("intensity_range does not bracket the image values")

    @property
    def dims(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def ndim(self) -> int:
        return self.values.ndim

    def normalized(self) -> "ImageGrid":
        """Affinely map intensities into [0, 1] using ``intensity_range``."""
        lo, hi = self.intensity_range
        if hi <= lo:
            raise GridError("degenerate intensity_range; cannot normalize a constant span")
        vals = (self.values - lo) / (hi - lo)
        return ImageGrid(vals, spacing=self.spacing, intensity_range=(0.0, 1.0))

    def with_values(self, values: np.ndarray) -> "ImageGrid":
        return ImageGrid(values, spacing=self.spacing)


# ---------------------------------------------------------------------------
# File I/O: JSON header + little-endian float32 raw voxels, x-fastest order.

def save_image(image: ImageGrid, path) -> None:
    path = Path(path)
    header = {
        "dims": list(image.dims),
        "spacing": list(image.spacing),
        "intensity_range": list(image.intensity_range),
        "dtype": "float32",
    }
    path.with_suffix(".json").write_text(json.dumps(header, indent=2))
    raw = np.asarray(image.values, dtype="<f4").ravel(order="F")
    path.with_suffix(".raw").write_bytes(raw.tobytes())


def load_image(path) -> ImageGrid:
    path = Path(path)
    header = json.loads(path.with_suffix(".json").read_text())
    if header.get("dtype") != "float32":
        raise GridError(f"unsupported voxel dtype {header.get('dtype')!r}")
    dims = tuple(header["dims"])
    raw = np.frombuffer(path.with_suffix(".raw").read_bytes(), dtype="<f4")
    if raw.size != int(np.prod(dims)):
        raise GridError("raw voxel payload does not match header dims")
    values = raw.astype(np.float64).reshape(dims, order="F")
    return ImageGrid(values, spacing=tuple(header["spacing"]),
                     intensity_range=tuple(header["intensity_range"]))


def save_pgm(image: ImageGrid, path) -> None:
    """Export a 2D image as binary PGM (16-bit), for quick inspection."""
    if image.ndim != 2:
        raise GridError("PGM export only supports 2D images")
    lo, hi = image.intensity_range
    span = hi - lo if hi > lo else 1.0
    pix = np.round((image.values - lo) / span * 65535).astype(">u2")
    # PGM is row-major with y as rows; transpose from [x, y] indexing.
    body = pix.T.tobytes()
    nx, ny = image.dims
    with open(path, "wb") as fh:
        fh.write(f"P5\n{nx} {ny}\n65535\n".encode("ascii"))
        fh.write(body)


def load_pgm(path) -> ImageGrid:
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(b"P5"):
        raise GridError("only binary PGM (P5) is supported")
    fields = []
    idx = 2
    while len(fields) < 3:
        while idx < len(data) and data[idx:idx + 1].isspace():
            idx += 1
        if data[idx:idx + 1] == b"#":
            idx = data.index(b"\n", idx) + 1
            continue
        start = idx
        while idx < len(data) and not data[idx:idx + 1].isspace():
            idx += 1
        fields.append(int(data[start:idx]))
    idx += 1  # single whitespace after maxval
    nx, ny, maxval = fields
    dtype = ">u2" if maxval > 255 else "u1"
    pix = np.frombuffer(data, dtype=dtype, offset=idx, count=nx * ny)
    values = pix.astype(np.float64).reshape(ny, nx).T / maxval
    return ImageGrid(values, intensity_range=(0.0, 1.0))
