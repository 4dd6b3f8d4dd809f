"""Procedural mesh corpus: box assemblies, extruded profiles, low-poly spheres.

Every shape is built without rotational symmetry so that the eight box corners
can be told apart from a single view.
"""
from __future__ import annotations

import math
import os

import numpy as np

from ..meshio import Mesh, normalize_unit_cube, save_obj

# quads of a box whose corner k has bit i set for the +i side
_BOX_QUADS = [(0, 2, 3, 1), (4, 5, 7, 6), (0, 1, 5, 4), (2, 6, 7, 3), (0, 4, 6, 2), (1, 3, 7, 5)]


def box(lo, hi):
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    k = np.arange(8)
    bits = np.stack([(k >> i) & 1 for i in range(3)], axis=1)
    verts = np.where(bits == 1, hi, lo)
    tris = [t for q in _BOX_QUADS for t in ((q[0], q[1], q[2]), (q[0], q[2], q[3]))]
    return verts, np.array(tris)


def combine(parts):
    verts, tris, off = [], [], 0
    for v, t in parts:
        verts.append(v)
        tris.append(t + off)
        off += len(v)
    return np.concatenate(verts), np.concatenate(tris)


def _ear_clip(poly):
    """Triangulate a simple counter-clockwise polygon by ear clipping."""
    idx = list(range(len(poly)))
    out = []

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    guard = 0
    while len(idx) > 3 and guard < 10000:
        guard += 1
        for j in range(len(idx)):
            i0, i1, i2 = idx[j - 1], idx[j], idx[(j + 1) % len(idx)]
            a, b, c = poly[i0], poly[i1], poly[i2]
            if cross(a, b, c) <= 0:
                continue
            if any(cross(a, b, poly[q]) >= 0 and cross(b, c, poly[q]) >= 0 and cross(c, a, poly[q]) >= 0
                   for q in idx if q not in (i0, i1, i2)):
                continue
            out.append((i0, i1, i2))
            idx.pop(j)
            break
    out.append(tuple(idx))
    return out


def extrude(profile, depth):
    """Prism from a CCW 2D profile in the xy plane, extruded along z."""
    p = np.asarray(profile, float)
    n = len(p)
    bottom = np.column_stack([p, np.full(n, -depth / 2)])
    top = np.column_stack([p, np.full(n, depth / 2)])
    verts = np.vstack([bottom, top])
    caps = _ear_clip(p)
    tris = [(c, b, a) for a, b, c in caps] + [(a + n, b + n, c + n) for a, b, c in caps]
    for i in range(n):
        j = (i + 1) % n
        tris += [(i, j, j + n), (i, j + n, i + n)]
    return verts, np.array(tris)


def uv_sphere(center, radii, n_lat=6, n_lon=8):
    center, radii = np.asarray(center, float), np.asarray(radii, float)
    verts = [center + radii * [0, -1, 0]]
    for i in range(1, n_lat):
        phi = math.pi * i / n_lat - math.pi / 2
        for j in range(n_lon):
            lam = 2 * math.pi * j / n_lon
            verts.append(center + radii * [math.cos(phi) * math.cos(lam), math.sin(phi), math.cos(phi) * math.sin(lam)])
    verts.append(center + radii * [0, 1, 0])
    tris = []
    top = len(verts) - 1
    for j in range(n_lon):
        tris.append((0, 1 + (j + 1) % n_lon, 1 + j))
    for i in range(n_lat - 2):
        r0, r1 = 1 + i * n_lon, 1 + (i + 1) * n_lon
        for j in range(n_lon):
            a, b = r0 + j, r0 + (j + 1) % n_lon
            c, d = r1 + j, r1 + (j + 1) % n_lon
            tris += [(a, b, d), (a, d, c)]
    last = 1 + (n_lat - 2) * n_lon
    for j in range(n_lon):
        tris.append((last + j, last + (j + 1) % n_lon, top))
    return np.array(verts), np.array(tris)


def _shapes():
    return {
        "chair": combine([
            box([-0.5, -0.05, -0.5], [0.5, 0.05, 0.5]),  # seat
            box([-0.5, 0.05, 0.4], [0.5, 1.0, 0.5]),  # back
            box([-0.5, -0.8, -0.5], [-0.4, -0.05, -0.4]),
            box([0.4, -0.8, -0.5], [0.5, -0.05, -0.4]),
            box([-0.5, -0.8, 0.4], [-0.4, -0.05, 0.5]),
            box([0.4, -0.8, 0.4], [0.5, -0.05, 0.5]),
        ]),
        "desk": combine([
            box([-1.0, 0.0, -0.5], [1.0, 0.08, 0.5]),
            box([-1.0, -0.7, -0.5], [-0.9, 0.0, 0.5]),  # panel leg
            box([0.3, -0.7, -0.5], [1.0, 0.0, 0.5]),  # drawer block
        ]),
        "lamp": combine([
            box([-0.4, -1.0, -0.3], [0.4, -0.9, 0.3]),
            box([-0.35, -0.9, -0.05], [-0.25, 0.6, 0.05]),
            box([-0.35, 0.5, -0.15], [0.35, 0.7, 0.15]),
        ]),
        "l_beam": extrude([[0, 0], [1.0, 0], [1.0, 0.25], [0.25, 0.25], [0.25, 0.6], [0, 0.6]], 0.35),
        "t_bracket": extrude([[0, 0], [0.2, 0], [0.2, 0.5], [0.8, 0.5], [0.8, 0.7], [-0.2, 0.7], [-0.2, 0.5], [0, 0.5]], 0.5),
        "wedge": extrude([[0, 0], [1.0, 0], [0, 0.45]], 0.7),
        "knob": combine([
            uv_sphere([0, 0, 0], [0.5, 0.4, 0.45]),
            box([0.3, -0.08, -0.08], [0.9, 0.08, 0.08]),
            box([-0.1, 0.3, 0.2], [0.1, 0.55, 0.4]),
        ]),
        "shelf": combine([
            box([-0.5, -1.0, -0.2], [-0.45, 1.0, 0.2]),
            box([-0.45, -1.0, -0.2], [0.5, -0.95, 0.2]),
            box([-0.45, -0.1, -0.2], [0.5, -0.05, 0.2]),
            box([-0.45, 0.7, -0.2], [0.2, 0.75, 0.2]),
        ]),
        "step_block": combine([
            box([0, 0, 0], [1.0, 0.3, 0.8]),
            box([0, 0.3, 0], [0.5, 0.6, 0.8]),
            box([0, 0.6, 0], [0.25, 0.9, 0.3]),
        ]),
    }


def procedural_meshes() -> list:
    """The corpus, normalized to the unit cube, sorted by id."""
    return [normalize_unit_cube(Mesh(v, t, name)) for name, (v, t) in sorted(_shapes().items())]


def write_meshes(out_dir) -> list:
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for m in procedural_meshes():
        path = os.path.join(out_dir, f"{m.id}.obj")
        save_obj(m, path)
        paths.append(path)
    return paths
