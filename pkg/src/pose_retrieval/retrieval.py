"""Pose-binned descriptor database, the five retrieval setups, and pose-aligned rendering."""
from __future__ import annotations

import enum
import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import BehindCameraError, ConfigurationError, EmptyInputError, FormatError, ParameterError
from .geometry import CameraIntrinsics, Pose, Viewpoint
from .learning.net import TinyNet
from .learning.train import depth_to_input
from .meshio import Mesh, rescale_to_dims
from .renderer import render_depth, render_shaded

DB_MAGIC = b"WPDB1"
DEFAULT_DB_TZ = 5.0


class RetrievalMode(str, enum.Enum):
    GT = "gt"
    PRED = "pred"
    OFF = "off"
    CANO = "cano"
    RAND = "rand"


@dataclass(frozen=True)
class PoseBinGrid:
    """Bin centers in whole degrees at multiples of ``step``; ranges are inclusive."""

    step: int = 10
    azimuth: tuple = (0, 350)
    elevation: tuple = (-30, 30)
    theta: tuple = (-30, 30)

    def __post_init__(self):
        if self.step <= 0 or 360 % self.step:
            raise ParameterError(f"bin step {self.step} must divide 360")
        for lo, hi in (self.azimuth, self.elevation, self.theta):
            if lo % self.step or hi % self.step or hi < lo:
                raise ParameterError("bin ranges must be ordered multiples of the step")

    @classmethod
    def full(cls, step=10):
        return cls(step, (0, 360 - step), (-90, 90), (-180, 180 - step))

    def _axis(self, lo, hi):
        return list(range(lo, hi + 1, self.step))

    def centers(self):
        """All bin triples ``(azimuth, elevation, theta)`` in degrees, in a fixed order."""
        return [(a, e, t)
                for a in self._axis(*self.azimuth)
                for e in self._axis(*self.elevation)
                for t in self._axis(*self.theta)]

    def __len__(self):
        return len(self._axis(*self.azimuth)) * len(self._axis(*self.elevation)) * len(self._axis(*self.theta))


def _round_to_step(x, step):
    """Nearest multiple of ``step``; exact ties go to the smaller multiple."""
    c = math.floor(x / step)
    if x - c * step > step / 2.0:
        c += 1
    return c * step


def nearest_bin(grid: PoseBinGrid, v: Viewpoint) -> tuple:
    az, el, th = v.degrees()
    a = _round_to_step(az % 360.0, grid.step) % 360
    a = min(max(a, grid.azimuth[0]), grid.azimuth[1])
    e = min(max(_round_to_step(el, grid.step), grid.elevation[0]), grid.elevation[1])
    t = _round_to_step((th + 180.0) % 360.0 - 180.0, grid.step)
    if t >= 180:
        t -= 360
    t = min(max(t, grid.theta[0]), grid.theta[1])
    return int(a), int(e), int(t)


def bin_pose(b, tz) -> Pose:
    return Pose.from_viewpoint(Viewpoint.from_degrees(*b), [0.0, 0.0, tz])


def describe_depth(net: TinyNet, depth):
    return net.describe(depth_to_input(depth))


class DescriptorDB:
    """Descriptors of depth renderings, one per (model, pose bin)."""

    def __init__(self, grid: PoseBinGrid, descriptor_dim: int, tz=DEFAULT_DB_TZ):
        self.grid = grid
        self.descriptor_dim = int(descriptor_dim)
        self.tz = float(tz)
        self.model_ids = []
        self.bins = []
        self._descr = []
        self._index = {}
        self._by_bin = {}

    def add(self, model_id, b, descriptor):
        b = tuple(int(x) for x in b)
        key = (model_id, b)
        if key in self._index:
            raise ParameterError(f"duplicate entry for {key}")
        d = np.asarray(descriptor, dtype=np.float32).ravel()
        if d.size != self.descriptor_dim:
            raise ParameterError(f"descriptor length {d.size} != {self.descriptor_dim}")
        self._index[key] = len(self.model_ids)
        self._by_bin.setdefault(b, []).append(len(self.model_ids))
        self.model_ids.append(model_id)
        self.bins.append(b)
        self._descr.append(d)

    def __len__(self):
        return len(self.model_ids)

    @property
    def descriptors(self):
        if not self._descr:
            return np.zeros((0, self.descriptor_dim), dtype=np.float32)
        return np.stack(self._descr)

    def get(self, model_id, b):
        return self._descr[self._index[(model_id, tuple(b))]]

    def at_bin(self, b):
        """``[(model_id, descriptor), ...]`` stored for one bin."""
        return [(self.model_ids[i], self._descr[i]) for i in self._by_bin.get(tuple(b), [])]

    # -- persistence --------------------------------------------------------

    def to_bytes(self) -> bytes:
        g = self.grid
        out = [DB_MAGIC, struct.pack("<I", self.descriptor_dim),
               struct.pack("<H6hd", g.step, *g.azimuth, *g.elevation, *g.theta, self.tz),
               struct.pack("<I", len(self))]
        for mid, b, d in zip(self.model_ids, self.bins, self._descr):
            name = mid.encode("utf-8")
            out.append(struct.pack("<H", len(name)))
            out.append(name)
            out.append(struct.pack("<3h", *b))
            out.append(d.astype("<f4").tobytes())
        return b"".join(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> "DescriptorDB":
        if data[:5] != DB_MAGIC:
            raise FormatError("bad descriptor database magic")
        try:
            off = 5
            (dim,) = struct.unpack_from("<I", data, off)
            off += 4
            step, a0, a1, e0, e1, t0, t1, tz = struct.unpack_from("<H6hd", data, off)
            off += struct.calcsize("<H6hd")
            (count,) = struct.unpack_from("<I", data, off)
            off += 4
            db = cls(PoseBinGrid(step, (a0, a1), (e0, e1), (t0, t1)), dim, tz)
            for _ in range(count):
                (n,) = struct.unpack_from("<H", data, off)
                off += 2
                mid = data[off:off + n].decode("utf-8")
                off += n
                b = struct.unpack_from("<3h", data, off)
                off += 6
                if off + 4 * dim > len(data):
                    raise FormatError("truncated descriptor database")
                d = np.frombuffer(data, dtype="<f4", count=dim, offset=off)
                off += 4 * dim
                db.add(mid, b, d)
        except struct.error as exc:
            raise FormatError(f"truncated descriptor database: {exc}") from None
        if off != len(data):
            raise FormatError("trailing bytes in descriptor database")
        return db

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def build_db(models, grid: PoseBinGrid, synth_net: TinyNet, k: CameraIntrinsics, tz=DEFAULT_DB_TZ) -> DescriptorDB:
    """Render every model at every bin center (object centered at depth ``tz``) and store descriptors."""
    if not models:
        raise EmptyInputError("no models to index")
    db = DescriptorDB(grid, synth_net.config.descriptor_dim, tz)
    centers = grid.centers()
    for m in models:
        for b in centers:
            db.add(m.id, b, describe_depth(synth_net, render_depth(m, bin_pose(b, tz), k)))
    return db


def rank(query, candidates, top_k=None):
    """Sort ``(model_id, descriptor)`` pairs by Euclidean distance to ``query``.

    Ties are broken by model id so the result does not depend on input order.
    """
    q = np.asarray(query, dtype=np.float32).astype(np.float64)
    scored = []
    for mid, d in candidates:
        diff = np.asarray(d, dtype=np.float32).astype(np.float64) - q
        scored.append((float(np.sqrt(np.dot(diff, diff))), mid))
    scored.sort()
    out = [(mid, dist) for dist, mid in scored]
    return out if top_k is None else out[:top_k]


def render_candidates(meshes, pose: Pose, dims, synth_net: TinyNet, k: CameraIntrinsics):
    """Descriptors of every mesh rescaled to ``dims`` and rendered under ``pose``."""
    out = []
    for m in meshes:
        mm = rescale_to_dims(m, dims) if dims is not None else m
        out.append((m.id, describe_depth(synth_net, render_depth(mm, pose, k))))
    return out


def random_viewpoint(rng, ranges=None) -> Viewpoint:
    """Uniform draw over the training pose ranges (degrees)."""
    az = ranges.azimuth if ranges is not None else (0.0, 360.0)
    el = ranges.elevation if ranges is not None else (-30.0, 60.0)
    th = ranges.theta if ranges is not None else (-30.0, 30.0)
    return Viewpoint.from_degrees(rng.uniform(*az), rng.uniform(*el), rng.uniform(*th)).wrapped()


def retrieve(query, mode, pose: Pose | None = None, dims=None, *, db: DescriptorDB | None = None,
             meshes=None, synth_net: TinyNet | None = None, k: CameraIntrinsics | None = None,
             top_k=None, rng=None, ranges=None, categories=None, category=None):
    """Rank candidate models for a camera-domain descriptor.

    ``gt``/``pred`` render every mesh under ``pose`` (scaled to ``dims``);
    ``off`` reads the database at the bin nearest to ``pose``; ``cano`` and
    ``rand`` render at the frontal or a random viewpoint, keeping the
    translation of ``pose`` when one is given. ``categories`` maps model id to
    a category tag and, with ``category``, restricts the candidates.
    """
    mode = RetrievalMode(mode)

    def allowed(mid):
        return category is None or (categories or {}).get(mid) == category

    if mode is RetrievalMode.OFF:
        if db is None or pose is None:
            raise ConfigurationError("off mode needs a descriptor database and a pose")
        cands = [(mid, d) for mid, d in db.at_bin(nearest_bin(db.grid, pose.viewpoint)) if allowed(mid)]
        return rank(query, cands, top_k)
    if meshes is None or synth_net is None or k is None:
        raise ConfigurationError(f"{mode.value} mode needs meshes, a synthetic-domain network and intrinsics")
    meshes = [m for m in meshes if allowed(m.id)]
    if mode in (RetrievalMode.GT, RetrievalMode.PRED):
        if pose is None:
            raise ConfigurationError(f"{mode.value} mode needs a pose")
        render_pose = pose
    else:
        t = pose.t if pose is not None else np.array([0.0, 0.0, DEFAULT_DB_TZ])
        if mode is RetrievalMode.CANO:
            v = Viewpoint(0.0, 0.0, 0.0)
        else:
            if rng is None:
                raise ConfigurationError("rand mode needs a random generator")
            v = random_viewpoint(rng, ranges)
        render_pose = Pose.from_viewpoint(v, t)
    return rank(query, render_candidates(meshes, render_pose, dims, synth_net, k), top_k)


def align_render(mesh: Mesh, pose: Pose, dims, k: CameraIntrinsics):
    """Shaded render of ``mesh`` fitted into ``dims`` under the full 6-DoF pose, in image coordinates."""
    if not pose.t[2] > 0:
        raise BehindCameraError(f"object center depth {pose.t[2]} is not in front of the camera")
    return render_shaded(rescale_to_dims(mesh, dims), pose, k)


def align_render_centered(mesh: Mesh, pose: Pose, dims, k: CameraIntrinsics):
    """Rotation-only baseline: same viewpoint, object moved onto the optical axis at the same distance."""
    if not pose.t[2] > 0:
        raise BehindCameraError(f"object center depth {pose.t[2]} is not in front of the camera")
    centered = Pose(pose.r, [0.0, 0.0, float(np.linalg.norm(pose.t))])
    return render_shaded(rescale_to_dims(mesh, dims), centered, k)
