"""Parametric spatial transforms: translation, rigid, and cubic B-spline
free-form deformation.

Every transform maps sample positions (P, N) to warped positions and
exposes the adjoint of its parameter Jacobian, which is what the gradient
assembly needs: ``adjoint(points, cot)`` returns
``sum_x cot(x)^T  d phi / d params (x)`` as a parameter vector.
"""

from __future__ import annotations

import numpy as np

from .kernels import bspline3, bspline3_deriv


class TransformError(ValueError):
    pass


class Transform:
    kind = "base"

    @property
    def n_params(self) -> int:
        return self.params.size

    def get_params(self) -> np.ndarray:
        return self.params.copy()

    def with_params(self, params: np.ndarray) -> "Transform":
        raise NotImplementedError

    def apply(self, points: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def adjoint(self, points: np.ndarray, cot: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": self.get_params().tolist()}


class Translation(Transform):
    """phi(x) = x + t."""

    kind = "translation"

    def __init__(self, offset):
        self.params = np.asarray(offset, dtype=np.float64).copy()
        if self.params.ndim != 1 or self.params.size not in (2, 3):
            raise TransformError("translation offset must be a 2- or 3-vector")

    @classmethod
    def identity(cls, ndim: int) -> "Translation":
        return cls(np.zeros(ndim))

    def with_params(self, params):
        return Translation(params)

    def apply(self, points):
        return np.asarray(points, dtype=np.float64) + self.params

    def adjoint(self, points, cot):
        return cot.sum(axis=0)


def _cross_matrix(v: np.ndarray) -> np.ndarray:
    return np.array([[0.0, -v[2], v[1]],
                     [v[2], 0.0, -v[0]],
                     [-v[1], v[0], 0.0]])


def _rotation_from_vector(omega: np.ndarray) -> np.ndarray:
    """Rodrigues rotation matrix from an axis-angle vector."""
    theta = np.linalg.norm(omega)
    if theta < 1e-12:
        return np.eye(3) + _cross_matrix(omega)
    k = omega / theta
    kx = _cross_matrix(k)
    return np.eye(3) + np.sin(theta) * kx + (1 - np.cos(theta)) * (kx @ kx)


def _rotation_param_derivs(omega: np.ndarray) -> list:
    """dR/d omega_i for the axis-angle parameterization (Gallego & Yezzi)."""
    theta2 = float(omega @ omega)
    rot = _rotation_from_vector(omega)
    if theta2 < 1e-16:
        return [_cross_matrix(e) for e in np.eye(3)]
    derivs = []
    for i, e in enumerate(np.eye(3)):
        term = omega[i] * _cross_matrix(omega) \
            + _cross_matrix(np.cross(omega, (np.eye(3) - rot) @ e))
        derivs.append(term @ rot / theta2)
    return derivs


class Rigid(Transform):
    """Rotation about the domain center plus translation.

    2D parameters: (theta, tx, ty); 3D: (wx, wy, wz, tx, ty, tz) with the
    rotation vector in axis-angle form.
    """

    kind = "rigid"

    def __init__(self, params, center):
        self.center = np.asarray(center, dtype=np.float64)
        self.ndim = self.center.size
        params = np.asarray(params, dtype=np.float64).copy()
        expected = 3 if self.ndim == 2 else 6
        if params.size != expected:
            raise TransformError(f"rigid in {self.ndim}D needs {expected} parameters")
        self.params = params

    @classmethod
    def identity(cls, dims) -> "Rigid":
        center = [(n - 1) / 2.0 for n in dims]
        n = 3 if len(center) == 2 else 6
        return cls(np.zeros(n), center)

    def with_params(self, params):
        return Rigid(params, self.center)

    def _rotation(self) -> np.ndarray:
        if self.ndim == 2:
            th = self.params[0]
            c, s = np.cos(th), np.sin(th)
            return np.array([[c, -s], [s, c]])
        return _rotation_from_vector(self.params[:3])

    def _translation(self) -> np.ndarray:
        return self.params[1:] if self.ndim == 2 else self.params[3:]

    def apply(self, points):
        pts = np.asarray(points, dtype=np.float64) - self.center
        return pts @ self._rotation().T + self.center + self._translation()

    def adjoint(self, points, cot):
        pts = np.asarray(points, dtype=np.float64) - self.center
        grad = np.zeros(self.n_params)
        if self.ndim == 2:
            th = self.params[0]
            c, s = np.cos(th), np.sin(th)
            drot = np.array([[-s, -c], [c, -s]])
            grad[0] = np.sum(cot * (pts @ drot.T))
            grad[1:] = cot.sum(axis=0)
        else:
            for i, drot in enumerate(_rotation_param_derivs(self.params[:3])):
                grad[i] = np.sum(cot * (pts @ drot.T))
            grad[3:] = cot.sum(axis=0)
        return grad


class BSplineFFD(Transform):
    """Uniform cubic B-spline free-form deformation.

    Control point k sits at position (k - 1) * spacing per axis, so a
    ``control_shape`` grid covers the image with a one-cell margin; all
    controls zero reproduces the identity exactly.  Parameters are the
    flattened control displacements, last axis the displacement dimension.
    """

    kind = "bspline_ffd"

    def __init__(self, control_shape, spacing, displacements=None):
        self.control_shape = tuple(int(n) for n in control_shape)
        self.ndim = len(self.control_shape)
        self.spacing = np.asarray(spacing, dtype=np.float64) * np.ones(self.ndim)
        if any(n < 4 for n in self.control_shape):
            raise TransformError("need at least 4 control points per axis")
        shape = self.control_shape + (self.ndim,)
        if displacements is None:
            self.displacements = np.zeros(shape)
        else:
            self.displacements = np.asarray(displacements, dtype=np.float64).reshape(shape).copy()

    @classmethod
    def for_dims(cls, dims, control_shape) -> "BSplineFFD":
        """Control grid sized so that its interior span covers [0, dim-1]."""
        control_shape = tuple(int(n) for n in control_shape)
        spacing = [(n - 1) / (c - 3) for n, c in zip(dims, control_shape)]
        return cls(control_shape, spacing)

    @property
    def params(self) -> np.ndarray:
        return self.displacements.ravel()

    def with_params(self, params):
        return BSplineFFD(self.control_shape, self.spacing, params)

    def _basis(self, points):
        """Per-axis 4-tap basis weights and control indices for each point."""
        t = np.asarray(points, dtype=np.float64) / self.spacing  # grid units
        base = np.floor(t).astype(np.int64)
        out = []
        for d in range(self.ndim):
            offs = np.arange(0, 4)
            # control k contributes B3(t - (k - 1)); k = base + 1 + local
            ks = base[:, d, None] + offs[None, :]
            arg = t[:, d, None] - (ks - 1)
            w = bspline3(arg)
            dw = bspline3_deriv(arg) / self.spacing[d]
            ks = np.clip(ks, 0, self.control_shape[d] - 1)
            out.append((ks, w, dw))
        return out

    def apply(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        basis = self._basis(points)
        disp = np.zeros_like(points)
        for offs in np.ndindex(*(4,) * self.ndim):
            idx = tuple(basis[d][0][:, offs[d]] for d in range(self.ndim))
            w = basis[0][1][:, offs[0]]
            for d in range(1, self.ndim):
                w = w * basis[d][1][:, offs[d]]
            disp += w[:, None] * self.displacements[idx]
        return points + disp

    def adjoint(self, points, cot):
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        basis = self._basis(points)
        grad = np.zeros(self.control_shape + (self.ndim,))
        flat = grad.reshape(-1, self.ndim)
        strides = np.cumprod((self.control_shape + (1,))[::-1])[::-1][1:]
        for offs in np.ndindex(*(4,) * self.ndim):
            w = basis[0][1][:, offs[0]]
            lin = basis[0][0][:, offs[0]] * strides[0]
            for d in range(1, self.ndim):
                w = w * basis[d][1][:, offs[d]]
                lin = lin + basis[d][0][:, offs[d]] * strides[d]
            for c in range(self.ndim):
                np.add.at(flat[:, c], lin, w * cot[:, c])
        return grad.ravel()


def make_transform(kind: str, dims, **kwargs) -> Transform:
    if kind == "translation":
        return Translation.identity(len(dims))
    if kind == "rigid":
        return Rigid.identity(dims)
    if kind == "bspline_ffd":
        control_shape = kwargs.get("control_shape", (4,) * len(dims))
        return BSplineFFD.for_dims(dims, control_shape)
    raise TransformError(f"unknown transform kind {kind!r}")


def from_dict(spec: dict, dims) -> Transform:
    kind = spec["kind"]
    params = np.asarray(spec.get("params", []), dtype=np.float64)
    t = make_transform(kind, dims, control_shape=spec.get("control_shape"))
    if params.size:
        t = t.with_params(params)
    return t
