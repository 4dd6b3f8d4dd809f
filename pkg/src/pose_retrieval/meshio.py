"""Triangle meshes: OBJ subset I/O, unit-cube normalization, rescaling to box dimensions."""
from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDimensionsError, DegenerateMeshError, ParseError
from .geometry import Dimensions


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: np.ndarray  # (N, 3) float
    triangles: np.ndarray  # (M, 3) int, zero-based
    id: str = ""

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float)
        f = np.array(self.triangles, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3 or v.shape[0] < 3:
            raise DegenerateMeshError(f"mesh {self.id!r}: need at least 3 vertices")
        if f.ndim != 2 or f.shape[1] != 3 or f.shape[0] < 1:
            raise DegenerateMeshError(f"mesh {self.id!r}: need at least 1 triangle")
        if not np.all(np.isfinite(v)):
            raise DegenerateMeshError(f"mesh {self.id!r}: non-finite coordinates")
        if f.min() < 0 or f.max() >= len(v):
            raise DegenerateMeshError(f"mesh {self.id!r}: triangle index out of range")
        v.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", f)

    def with_vertices(self, vertices) -> "Mesh":
        return Mesh(vertices, self.triangles, self.id)


def load_obj(source, mesh_id="") -> Mesh:
    """Parse ``v``/``f`` records from a binary stream, raw bytes or a file path.

    Polygons are fan-triangulated, negative indices count back from the last
    vertex, ``f`` entries like ``3/1/2`` keep only the vertex index and every
    other record type is skipped.
    """
    if isinstance(source, (bytes, bytearray)):
        data = bytes(source)
    elif hasattr(source, "read"):
        data = source.read()
    else:
        with open(source, "rb") as fh:
            data = fh.read()
    return loads_obj(data.decode("utf-8") if isinstance(data, bytes) else data, mesh_id)


def loads_obj(text: str, mesh_id="") -> Mesh:
    verts = []
    tris = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        tag = parts[0]
        if tag == "v":
            if len(parts) < 4:
                raise ParseError("vertex record needs 3 coordinates", lineno)
            try:
                verts.append([float(x) for x in parts[1:4]])
            except ValueError as exc:
                raise ParseError(f"bad vertex coordinate: {exc}", lineno) from None
        elif tag == "f":
            if len(parts) < 4:
                raise ParseError("face record needs at least 3 indices", lineno)
            idx = []
            for tok in parts[1:]:
                try:
                    i = int(tok.split("/", 1)[0])
                except ValueError:
                    raise ParseError(f"bad face index {tok!r}", lineno) from None
                if i > 0:
                    i -= 1
                elif i < 0:
                    i += len(verts)
                else:
                    raise ParseError("face index 0 is invalid", lineno)
                if not 0 <= i < len(verts):
                    raise ParseError(f"face index {tok} out of range ({len(verts)} vertices)", lineno)
                idx.append(i)
            for j in range(1, len(idx) - 1):
                tris.append((idx[0], idx[j], idx[j + 1]))
    if not tris:
        raise ParseError("no faces")
    if len(verts) < 3:
        raise ParseError("fewer than 3 vertices")
    try:
        return Mesh(np.array(verts), np.array(tris), mesh_id)
    except DegenerateMeshError as exc:
        raise ParseError(str(exc)) from None


def dumps_obj(m: Mesh) -> str:
    buf = io.StringIO()
    if m.id:
        buf.write(f"# {m.id}\n")
    for x, y, z in m.vertices:
        # repr round-trips float64 exactly
        buf.write(f"v {float(x)!r} {float(y)!r} {float(z)!r}\n")
    for a, b, c in m.triangles:
        buf.write(f"f {a + 1} {b + 1} {c + 1}\n")
    return buf.getvalue()


def save_obj(m: Mesh, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_obj(m))


def mesh_extents(m: Mesh) -> np.ndarray:
    if len(m.vertices) == 0:
        raise DegenerateMeshError("empty mesh")
    return m.vertices.max(axis=0) - m.vertices.min(axis=0)


def normalize_unit_cube(m: Mesh) -> Mesh:
    """Center the bounding box at the origin and scale uniformly so the longest side is 1."""
    lo, hi = m.vertices.min(axis=0), m.vertices.max(axis=0)
    ext = float(np.max(hi - lo))
    if not ext > 0:
        raise DegenerateMeshError(f"mesh {m.id!r} has zero extent")
    center = (lo + hi) / 2.0
    return m.with_vertices((m.vertices - center) / ext)


def rescale_factor(m: Mesh, target) -> float:
    t = np.asarray(target.as_array() if isinstance(target, Dimensions) else target, dtype=float)
    if t.shape != (3,) or np.any(~(t > 0)):
        raise DegenerateDimensionsError(f"target dimensions {t.tolist()} must be positive")
    ext = mesh_extents(m)
    with np.errstate(divide="ignore"):
        ratios = np.where(ext > 0, t / np.where(ext > 0, ext, 1.0), np.inf)
    s = float(np.min(ratios))
    if not np.isfinite(s):
        raise DegenerateMeshError(f"mesh {m.id!r} has zero extent")
    return s


def rescale_to_dims(m: Mesh, target) -> Mesh:
    """Scale uniformly by the smallest target/extent ratio so the mesh fits the target box."""
    s = rescale_factor(m, target)
    return m.with_vertices(m.vertices * s)
