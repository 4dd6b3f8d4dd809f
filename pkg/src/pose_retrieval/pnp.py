"""Pose from the eight box-corner projections: DLT start, Levenberg-Marquardt refine."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometryError, ShapeError
from .geometry import (
    CameraIntrinsics,
    Dimensions,
    Pose,
    axis_angle_to_matrix,
    bbox_corners,
    denormalize_projection,
    nearest_rotation,
    project,
    skew,
)

MAX_ITERS = 100
INIT_DAMPING = 1e-3
STEP_TOL = 1e-10
REL_COST_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Correspondences:
    pts2d: np.ndarray  # (N, 2) pixels
    pts3d: np.ndarray  # (N, 3) model units

    def __post_init__(self):
        p2 = np.asarray(self.pts2d, dtype=float)
        p3 = np.asarray(self.pts3d, dtype=float)
        if p2.ndim != 2 or p2.shape[1] != 2 or p3.shape != (p2.shape[0], 3):
            raise ShapeError(f"bad correspondence shapes {p2.shape} / {p3.shape}")
        if p2.shape[0] < 6:
            raise DegenerateGeometryError("need at least 6 correspondences")
        object.__setattr__(self, "pts2d", p2)
        object.__setattr__(self, "pts3d", p3)


@dataclass(frozen=True, eq=False)
class Prediction19:
    """Network output split into 8 normalized corner projections and box dimensions."""

    proj: np.ndarray  # (8, 2) in [0, 1] image coordinates
    dims: Dimensions

    @classmethod
    def from_vector(cls, v):
        v = np.asarray(v, dtype=float).ravel()
        if v.size != 19:
            raise ShapeError(f"expected 19 values, got {v.size}")
        return cls(v[:16].reshape(8, 2), Dimensions.of(v[16:]))

    def to_vector(self):
        return np.concatenate([np.asarray(self.proj, dtype=float).ravel(), self.dims.as_array()])


@dataclass(frozen=True)
class PnPResult:
    pose: Pose
    converged: bool
    iterations: int
    rms: float
    init_rms: float
    costs: tuple = ()  # summed squared residual after the start and each accepted step


def _residuals(r, t, k, c):
    xc = c.pts3d @ r.T + t
    z = xc[:, 2]
    u = k.f * xc[:, 0] / z + k.cx
    v = k.f * xc[:, 1] / z + k.cy
    return np.stack([u, v], axis=1) - c.pts2d, xc


def _jacobian(xc, k):
    """d(pixel)/d(delta_rot, delta_t) for the left update R <- exp(delta_rot) R."""
    n = xc.shape[0]
    x, y, z = xc[:, 0], xc[:, 1], xc[:, 2]
    dproj = np.zeros((n, 2, 3))
    dproj[:, 0, 0] = k.f / z
    dproj[:, 0, 2] = -k.f * x / z**2
    dproj[:, 1, 1] = k.f / z
    dproj[:, 1, 2] = -k.f * y / z**2
    # d(xc)/d(delta_rot) = -[xc]_x, d(xc)/dt = I
    dx_drot = -np.stack([skew(p) for p in xc])
    j = np.concatenate([dproj @ dx_drot, dproj], axis=2)
    return j.reshape(2 * n, 6)


def dlt_pose(c: Correspondences, k: CameraIntrinsics) -> Pose:
    """Linear pose from the homogeneous projection system in normalized image coords."""
    xn = (c.pts2d[:, 0] - k.cx) / k.f
    yn = (c.pts2d[:, 1] - k.cy) / k.f
    n = len(xn)
    xh = np.hstack([c.pts3d, np.ones((n, 1))])
    a = np.zeros((2 * n, 12))
    a[0::2, 0:4] = xh
    a[0::2, 8:12] = -xn[:, None] * xh
    a[1::2, 4:8] = xh
    a[1::2, 8:12] = -yn[:, None] * xh
    _, s, vt = np.linalg.svd(a)
    if s[0] <= 0 or s[-2] / s[0] < 1e-10:
        raise DegenerateGeometryError("rank-deficient DLT system")
    m = vt[-1].reshape(3, 4)
    # the null vector has arbitrary sign; pick the one putting points in front
    if np.sum(xh @ m[2]) < 0:
        m = -m
    rm = m[:, :3]
    scale = float(np.mean(np.linalg.svd(rm, compute_uv=False)))
    if not np.isfinite(scale) or scale <= 0:
        raise DegenerateGeometryError("degenerate DLT rotation block")
    r = nearest_rotation(rm / scale)
    t = m[:, 3] / scale
    return Pose(r, t)


def solve_pnp(c: Correspondences, k: CameraIntrinsics, full_output=False):
    """Pose minimizing summed squared pixel reprojection error.

    Returns a :class:`Pose`, or a :class:`PnPResult` with convergence info when
    ``full_output`` is true. Non-convergence is reported, not raised.
    """
    init = dlt_pose(c, k)
    r, t = init.r.copy(), init.t.copy()
    res, xc = _residuals(r, t, k, c)
    if np.any(xc[:, 2] <= 0):
        # a bad linear start can straddle the camera plane; restart from the centroid depth
        t = np.array([0.0, 0.0, max(abs(t[2]), 1.0)])
        res, xc = _residuals(r, t, k, c)
        if np.any(xc[:, 2] <= 0):
            raise DegenerateGeometryError("no valid initialization in front of the camera")
    cost = float(np.sum(res**2))
    init_rms = float(np.sqrt(np.mean(np.sum(res**2, axis=1))))
    costs = [cost]
    lam = INIT_DAMPING
    converged = False
    it = 0
    for it in range(1, MAX_ITERS + 1):
        j = _jacobian(xc, k)
        g = j.T @ res.ravel()
        h = j.T @ j
        accepted = False
        while lam < 1e16:
            step = np.linalg.solve(h + lam * np.diag(np.diag(h) + 1e-12), -g)
            r_new = axis_angle_to_matrix(step[:3]) @ r
            t_new = t + step[3:]
            res_new, xc_new = _residuals(r_new, t_new, k, c)
            new_cost = float(np.sum(res_new**2)) if np.all(xc_new[:, 2] > 0) else np.inf
            if new_cost <= cost:
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            converged = True  # no descent direction left at machine precision
            break
        rel = (cost - new_cost) / max(cost, 1e-300)
        r, t, res, xc, cost = r_new, t_new, res_new, xc_new, new_cost
        costs.append(cost)
        lam = max(lam / 10.0, 1e-12)
        if np.linalg.norm(step) < STEP_TOL or rel < REL_COST_TOL or cost == 0.0:
            converged = True
            break
    pose = Pose(r, t)
    if not full_output:
        return pose
    rms = float(np.sqrt(cost / len(c.pts2d)))
    return PnPResult(pose, converged, it, rms, init_rms, tuple(costs))


def reprojection_rms(p: Pose, c: Correspondences, k: CameraIntrinsics) -> float:
    px = project(k, p, c.pts3d)
    return float(np.sqrt(np.mean(np.sum((px - c.pts2d) ** 2, axis=1))))


def estimate_pose(pred: Prediction19, k: CameraIntrinsics, full_output=False):
    """Scale the unit cube by the predicted dimensions and solve PnP on its corners.

    Returns ``(pose, dims)``; with ``full_output`` the first item is a PnPResult.
    """
    dims = Dimensions.of(pred.dims)
    corners = bbox_corners(dims)
    px = denormalize_projection(np.asarray(pred.proj, dtype=float).reshape(8, 2), k)
    out = solve_pnp(Correspondences(px, corners), k, full_output=full_output)
    return out, dims

