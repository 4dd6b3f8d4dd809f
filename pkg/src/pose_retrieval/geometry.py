"""Rotations, pinhole camera, 3D boxes and the viewpoint error metric.

Rotations are plain ``(3, 3)`` float arrays. Camera frame is x right, y down,
z forward; pixel ``(i, j)`` covers ``[i, i+1) x [j, j+1)`` so its center sits
at ``(i + 0.5, j + 0.5)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BehindCameraError, DegenerateDimensionsError, ParameterError

TWO_PI = 2.0 * math.pi


def rot_x(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def is_rotation(m, tol=1e-9) -> bool:
    m = np.asarray(m, dtype=float)
    if m.shape != (3, 3):
        return False
    return bool(np.allclose(m.T @ m, np.eye(3), atol=tol) and abs(np.linalg.det(m) - 1.0) <= tol)


def skew(v):
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def axis_angle_to_matrix(w):
    """Rodrigues' formula; ``w`` is axis * angle."""
    w = np.asarray(w, dtype=float)
    theta = float(np.linalg.norm(w))
    k = skew(w)
    if theta < 1e-8:
        # second-order Taylor keeps the map smooth near zero
        return np.eye(3) + k + 0.5 * (k @ k)
    return np.eye(3) + (math.sin(theta) / theta) * k + ((1.0 - math.cos(theta)) / theta**2) * (k @ k)


def matrix_to_axis_angle(r):
    r = np.asarray(r, dtype=float)
    cos_t = min(1.0, max(-1.0, (np.trace(r) - 1.0) / 2.0))
    theta = math.acos(cos_t)
    if theta < 1e-8:
        return np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]]) / 2.0
    v = np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    if math.pi - theta < 1e-4:
        # axis from the symmetric part, nn^T = (S - cos I) / (1 - cos); sign from the skew part
        b = ((r + r.T) / 2.0 - cos_t * np.eye(3)) / (1.0 - cos_t)
        i = int(np.argmax(np.diag(b)))
        n = b[:, i] / math.sqrt(b[i, i])
        if np.dot(n, v) < 0:
            n = -n
        return n * theta
    return v * (theta / (2.0 * math.sin(theta)))


def nearest_rotation(m):
    """Closest rotation in Frobenius norm (SVD projection, det forced to +1)."""
    u, _, vt = np.linalg.svd(np.asarray(m, dtype=float))
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


def geodesic_distance(a, b) -> float:
    """Rotation angle of ``a^T b`` in radians, in ``[0, pi]``.

    Uses ``atan2(sin, cos)`` with the sine from the skew part; ``acos`` of the
    trace alone loses half the digits near zero.
    """
    rel = np.asarray(a, dtype=float).T @ np.asarray(b, dtype=float)
    c = (np.trace(rel) - 1.0) / 2.0
    v = np.array([rel[2, 1] - rel[1, 2], rel[0, 2] - rel[2, 0], rel[1, 0] - rel[0, 1]])
    return math.atan2(float(np.linalg.norm(v)) / 2.0, c)


@dataclass(frozen=True)
class Viewpoint:
    """Azimuth, elevation and in-plane rotation, radians."""

    azimuth: float
    elevation: float
    theta: float

    def wrapped(self) -> "Viewpoint":
        az = self.azimuth % TWO_PI
        if az >= TWO_PI:
            az = 0.0
        th = (self.theta + math.pi) % TWO_PI - math.pi
        if th >= math.pi:
            th = -math.pi
        el = min(math.pi / 2, max(-math.pi / 2, self.elevation))
        return Viewpoint(az, el, th)

    @classmethod
    def from_degrees(cls, azimuth, elevation, theta):
        return cls(math.radians(azimuth), math.radians(elevation), math.radians(theta))

    def degrees(self):
        return (math.degrees(self.azimuth), math.degrees(self.elevation), math.degrees(self.theta))


def rotation_from_viewpoint(v: Viewpoint):
    """R = Rz(theta) @ Rx(elevation) @ Ry(azimuth)."""
    return rot_z(v.theta) @ rot_x(v.elevation) @ rot_y(v.azimuth)


def viewpoint_from_rotation(r) -> Viewpoint:
    r = np.asarray(r, dtype=float)
    el = math.asin(min(1.0, max(-1.0, r[2, 1])))
    az = math.atan2(-r[2, 0], r[2, 2])
    th = math.atan2(-r[0, 1], r[1, 1])
    return Viewpoint(az, el, th).wrapped()


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Pose:
    """Object-to-camera rigid transform ``x_cam = r @ x + t``."""

    r: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "r", _frozen(self.r))
        object.__setattr__(self, "t", _frozen(self.t).reshape(3))

    @classmethod
    def from_viewpoint(cls, v: Viewpoint, t) -> "Pose":
        return cls(rotation_from_viewpoint(v), t)

    def transform(self, x):
        return np.asarray(x, dtype=float) @ self.r.T + self.t

    @property
    def viewpoint(self) -> Viewpoint:
        return viewpoint_from_rotation(self.r)

    def __repr__(self):
        return f"Pose(viewpoint={self.viewpoint.degrees()}, t={self.t.tolist()})"


@dataclass(frozen=True)
class Dimensions:
    """Axis-aligned box extents in normalized model units, each in (0, 1]."""

    dx: float
    dy: float
    dz: float

    def __post_init__(self):
        for name in ("dx", "dy", "dz"):
            v = getattr(self, name)
            if not (v > 0.0) or not math.isfinite(v):
                raise DegenerateDimensionsError(f"{name}={v} must be positive")
            if v > 1.0 + 1e-9:
                raise DegenerateDimensionsError(f"{name}={v} exceeds the unit cube")

    @classmethod
    def of(cls, d) -> "Dimensions":
        if isinstance(d, Dimensions):
            return d
        dx, dy, dz = (float(x) for x in d)
        return cls(dx, dy, dz)

    def as_array(self):
        return np.array([self.dx, self.dy, self.dz])


@dataclass(frozen=True)
class CameraIntrinsics:
    f: float
    cx: float
    cy: float
    w: int
    h: int

    def __post_init__(self):
        if not self.f > 0 or self.w <= 0 or self.h <= 0:
            raise ParameterError(f"invalid intrinsics {self}")

    @classmethod
    def default(cls, w=64, h=64, focal_scale=1.2):
        return cls(focal_scale * max(w, h), w / 2.0, h / 2.0, int(w), int(h))

    @property
    def matrix(self):
        return np.array([[self.f, 0.0, self.cx], [0.0, self.f, self.cy], [0.0, 0.0, 1.0]])


def bbox_corners(d) -> np.ndarray:
    """Eight corners of a centered box, ``(8, 3)``.

    Corner ``k`` takes ``+d/2`` on axis ``i`` when bit ``i`` of ``k`` is set and
    ``-d/2`` otherwise, so corner 0 is ``(-dx, -dy, -dz) / 2``.
    """
    half = Dimensions.of(d).as_array() / 2.0
    k = np.arange(8)
    bits = np.stack([(k >> i) & 1 for i in range(3)], axis=1)
    return np.where(bits == 1, half, -half)


def project_camera_points(k: CameraIntrinsics, xc):
    """Project camera-frame points ``(..., 3)`` to pixels."""
    xc = np.asarray(xc, dtype=float)
    z = xc[..., 2]
    if np.any(z <= 0):
        raise BehindCameraError("point at or behind the camera plane")
    return np.stack([k.f * xc[..., 0] / z + k.cx, k.f * xc[..., 1] / z + k.cy], axis=-1)


def project(k: CameraIntrinsics, p: Pose, x):
    """Pinhole projection of model points ``x`` (shape ``(3,)`` or ``(N, 3)``)."""
    return project_camera_points(k, p.transform(x))


def normalize_projection(px, k: CameraIntrinsics):
    px = np.asarray(px, dtype=float)
    return px / np.array([k.w, k.h], dtype=float)


def denormalize_projection(uv, k: CameraIntrinsics):
    return np.asarray(uv, dtype=float) * np.array([k.w, k.h], dtype=float)


def random_rotation(rng: np.random.Generator):
    """Uniform rotation via a normalized Gaussian quaternion."""
    q = rng.standard_normal(4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])
