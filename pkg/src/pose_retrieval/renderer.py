"""Software z-buffer rasterizer: depth images, flat-shaded images, Gaussian blur.

Images are ``(h, w)`` float arrays indexed ``[row, col]``; background is 0.
Coverage is decided at pixel centers with a top-left fill rule, and depth is
interpolated perspective-correctly (``1/z`` is affine in screen space).
"""
from __future__ import annotations

import math

import numpy as np

from .errors import ParameterError
from .geometry import CameraIntrinsics, Pose
from .meshio import Mesh

NEAR = 1e-3
AMBIENT = 0.2
DIFFUSE = 0.8
DEFAULT_LIGHT = np.array([0.3, 0.4, -0.86]) / np.linalg.norm([0.3, 0.4, -0.86])


def _clip_near(tri):
    """Clip one camera-space triangle against ``z > NEAR``; returns 0..2 triangles."""
    out = []
    n = len(tri)
    for i in range(n):
        a, b = tri[i], tri[(i + 1) % n]
        ina, inb = a[2] > NEAR, b[2] > NEAR
        if ina:
            out.append(a)
        if ina != inb:
            s = (NEAR - a[2]) / (b[2] - a[2])
            p = a + s * (b - a)
            p[2] = NEAR * (1.0 + 1e-9)
            out.append(p)
    return [np.array([out[0], out[j], out[j + 1]]) for j in range(1, len(out) - 1)]


def _camera_triangles(m: Mesh, p: Pose):
    """Camera-frame triangles after near clipping, with their source face index."""
    xc = p.transform(m.vertices)
    tris = xc[m.triangles]  # (M, 3, 3)
    z = tris[:, :, 2]
    front = np.all(z > NEAR, axis=1)
    partial = ~front & np.any(z > NEAR, axis=1)
    faces = np.nonzero(front)[0]
    if not partial.any():
        return tris[front], faces
    extra, extra_faces = [], []
    for fi in np.nonzero(partial)[0]:
        for t in _clip_near(tris[fi]):
            extra.append(t)
            extra_faces.append(fi)
    if not extra:
        return tris[front], faces
    return (np.concatenate([tris[front], np.array(extra)]),
            np.concatenate([faces, np.array(extra_faces, dtype=np.int64)]))


def _owns_zero(dx, dy):
    # top-left rule for y-down screens with positive-area winding
    return dy < 0 or (dy == 0 and dx > 0)


def rasterize(m: Mesh, p: Pose, k: CameraIntrinsics):
    """Return ``(depth, face_index)``; uncovered pixels have depth 0 and index -1."""
    w, h = k.w, k.h
    zbuf = np.full((h, w), np.inf)
    fbuf = np.full((h, w), -1, dtype=np.int64)
    tris, faces = _camera_triangles(m, p)
    if len(tris) == 0:
        return np.zeros((h, w)), fbuf
    z = tris[:, :, 2]
    sx = k.f * tris[:, :, 0] / z + k.cx
    sy = k.f * tris[:, :, 1] / z + k.cy
    inv_z = 1.0 / z
    x0 = np.clip(np.ceil(sx.min(axis=1) - 0.5), 0, w).astype(np.int64)
    x1 = np.clip(np.floor(sx.max(axis=1) - 0.5), -1, w - 1).astype(np.int64)
    y0 = np.clip(np.ceil(sy.min(axis=1) - 0.5), 0, h).astype(np.int64)
    y1 = np.clip(np.floor(sy.max(axis=1) - 0.5), -1, h - 1).astype(np.int64)
    for i in np.nonzero((x1 >= x0) & (y1 >= y0))[0]:
        ax, bx, cx = sx[i]
        ay, by, cy = sy[i]
        za, zb, zc = inv_z[i]
        area = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
        if area == 0 or not math.isfinite(area):
            continue
        if area < 0:
            bx, cx, by, cy, zb, zc = cx, bx, cy, by, zc, zb
            area = -area
        px = np.arange(x0[i], x1[i] + 1) + 0.5
        py = (np.arange(y0[i], y1[i] + 1) + 0.5)[:, None]
        # e_a is opposite vertex a (edge b->c), and so on
        e_a = (cx - bx) * (py - by) - (cy - by) * (px - bx)
        e_b = (ax - cx) * (py - cy) - (ay - cy) * (px - cx)
        e_c = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
        inside = (
            ((e_a > 0) | ((e_a == 0) & _owns_zero(cx - bx, cy - by)))
            & ((e_b > 0) | ((e_b == 0) & _owns_zero(ax - cx, ay - cy)))
            & ((e_c > 0) | ((e_c == 0) & _owns_zero(bx - ax, by - ay)))
        )
        if not inside.any():
            continue
        iz = (e_a * za + e_b * zb + e_c * zc) / area
        with np.errstate(divide="ignore"):
            depth = 1.0 / iz
        zv = zbuf[y0[i]:y1[i] + 1, x0[i]:x1[i] + 1]
        fv = fbuf[y0[i]:y1[i] + 1, x0[i]:x1[i] + 1]
        upd = inside & (depth < zv) & (depth > 0)
        zv[upd] = depth[upd]
        fv[upd] = faces[i]
    zbuf[fbuf < 0] = 0.0
    return zbuf, fbuf


def render_depth(m: Mesh, p: Pose, k: CameraIntrinsics):
    return rasterize(m, p, k)[0]


def face_intensities(m: Mesh, p: Pose, light=DEFAULT_LIGHT):
    """Flat Lambertian intensity per face, normals turned toward the camera."""
    light = np.asarray(light, dtype=float)
    light = light / np.linalg.norm(light)
    tris = p.transform(m.vertices)[m.triangles]
    n = np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0])
    norm = np.linalg.norm(n, axis=1)
    n = n / np.where(norm > 0, norm, 1.0)[:, None]
    centroid = tris.mean(axis=1)
    flip = np.sum(n * centroid, axis=1) > 0
    n[flip] *= -1.0
    return AMBIENT + DIFFUSE * np.maximum(0.0, n @ light)


def render_shaded(m: Mesh, p: Pose, k: CameraIntrinsics, light=DEFAULT_LIGHT):
    _, fbuf = rasterize(m, p, k)
    inten = face_intensities(m, p, light)
    img = np.zeros(fbuf.shape)
    covered = fbuf >= 0
    img[covered] = inten[fbuf[covered]]
    return np.clip(img, 0.0, 1.0)


def render_both(m: Mesh, p: Pose, k: CameraIntrinsics, light=DEFAULT_LIGHT):
    """Depth and shaded image from one rasterization pass."""
    depth, fbuf = rasterize(m, p, k)
    inten = face_intensities(m, p, light)
    img = np.zeros(fbuf.shape)
    covered = fbuf >= 0
    img[covered] = inten[fbuf[covered]]
    return depth, np.clip(img, 0.0, 1.0)


def gaussian_kernel(sigma, ksize):
    if not sigma > 0:
        raise ParameterError(f"sigma must be positive, got {sigma}")
    if int(ksize) != ksize or ksize < 3 or ksize % 2 == 0:
        raise ParameterError(f"kernel size must be an odd integer >= 3, got {ksize}")
    x = np.arange(ksize) - ksize // 2
    g = np.exp(-(x**2) / (2.0 * sigma**2))
    return g / g.sum()


def gaussian_blur(img, sigma, ksize):
    """Separable Gaussian blur with edge clamping."""
    g = gaussian_kernel(sigma, ksize)
    r = int(ksize) // 2
    a = np.asarray(img, dtype=float)
    padded = np.pad(a, r, mode="edge")
    rows = sum(g[i] * padded[:, i:i + a.shape[1]] for i in range(len(g)))
    return sum(g[i] * rows[i:i + a.shape[0], :] for i in range(len(g)))


def silhouette(img):
    return np.asarray(img) > 0
