"""Synthetic pose dataset: rendered camera-domain and depth images plus a JSON manifest."""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import EmptyInputError, FormatError, ParameterError
from ..geometry import (
    CameraIntrinsics,
    Dimensions,
    Pose,
    Viewpoint,
    bbox_corners,
    normalize_projection,
    project,
)
from ..images import read_pfm, read_pgm, write_pfm, write_pgm
from ..meshio import mesh_extents
from ..renderer import gaussian_blur, render_both

MANIFEST_VERSION = 1


@dataclass(frozen=True)
class PoseRanges:
    """Sampling ranges; angles in degrees, distances in model units."""

    azimuth: tuple = (0.0, 360.0)
    elevation: tuple = (-30.0, 60.0)
    theta: tuple = (-30.0, 30.0)
    tz: tuple = (4.5, 5.5)
    lateral: float = 0.1  # |t_x|, |t_y| bound as a fraction of t_z

    def sample(self, rng) -> tuple:
        v = Viewpoint.from_degrees(rng.uniform(*self.azimuth), rng.uniform(*self.elevation),
                                   rng.uniform(*self.theta)).wrapped()
        tz = rng.uniform(*self.tz)
        txy = rng.uniform(-self.lateral, self.lateral, size=2) * tz
        return v, np.array([txy[0], txy[1], tz])


@dataclass(frozen=True)
class BlurPolicy:
    """Fraction of camera-domain images blurred at generation time."""

    prob: float = 0.0
    sigma: tuple = (0.5, 1.5)
    ksizes: tuple = (3, 5)


@dataclass
class Record:
    sample_id: str
    mesh_id: str
    viewpoint: list  # radians: azimuth, elevation, theta
    rotation: list  # 3x3 row-major
    translation: list
    dims: list
    shaded_path: str
    depth_path: str
    projections: list  # 8x2, normalized
    blur: list | None = None  # [sigma, ksize] when blurred

    @property
    def pose(self) -> Pose:
        return Pose(np.array(self.rotation).reshape(3, 3), np.array(self.translation))

    @property
    def target(self):
        """The 19 regression values: normalized projections then dimensions."""
        return np.concatenate([np.asarray(self.projections).ravel(), self.dims])


@dataclass
class DatasetManifest:
    records: list
    intrinsics: CameraIntrinsics
    split: str = "train"
    seed: int = 0
    root: str = field(default="", compare=False)

    def __len__(self):
        return len(self.records)

    def to_json(self) -> str:
        doc = {
            "version": MANIFEST_VERSION,
            "split": self.split,
            "seed": self.seed,
            "intrinsics": asdict(self.intrinsics),
            "records": [asdict(r) for r in self.records],
        }
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text, root=""):
        try:
            doc = json.loads(text)
            k = CameraIntrinsics(**doc["intrinsics"])
            records = [Record(**r) for r in doc["records"]]
            return cls(records, k, doc["split"], doc["seed"], root)
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"bad manifest: {exc}") from None

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read(), root=os.path.dirname(os.path.abspath(path)))

    def path(self, rel):
        return os.path.join(self.root, rel)

    def shaded_images(self):
        return np.stack([read_pgm(self.path(r.shaded_path)) for r in self.records])

    def depth_images(self):
        return np.stack([read_pfm(self.path(r.depth_path)) for r in self.records])

    def targets(self):
        return np.stack([r.target for r in self.records])

    def mesh_ids(self):
        return [r.mesh_id for r in self.records]


def _floats(a):
    return [float(x) for x in np.asarray(a, dtype=float).ravel()]


def generate_dataset(meshes, n_per_mesh, out_dir, ranges=PoseRanges(), k=None, seed=0,
                     blur=BlurPolicy(), split="train") -> DatasetManifest:
    """Render ``n_per_mesh`` random views of every mesh into ``out_dir``.

    Writes ``<split>.json`` next to an ``images/`` folder and returns the manifest.
    """
    if not meshes:
        raise EmptyInputError("no meshes")
    if n_per_mesh < 1:
        raise ParameterError("n_per_mesh must be >= 1")
    k = k or CameraIntrinsics.default()
    rng = np.random.default_rng(seed)
    img_dir = os.path.join(out_dir, "images")
    try:
        os.makedirs(img_dir, exist_ok=True)
    except OSError as exc:
        raise OSError(f"{img_dir}: {exc.strerror}") from exc
    records = []
    for m in meshes:
        dims = mesh_extents(m)
        corners = bbox_corners(Dimensions.of(dims))
        for j in range(n_per_mesh):
            v, t = ranges.sample(rng)
            pose = Pose.from_viewpoint(v, t)
            depth, shaded = render_both(m, pose, k)
            blur_info = None
            if blur.prob > 0 and rng.random() < blur.prob:
                sigma = float(rng.uniform(*blur.sigma))
                ks = int(rng.choice(blur.ksizes))
                shaded = gaussian_blur(shaded, sigma, ks)
                blur_info = [sigma, ks]
            sid = f"{split}_{m.id}_{j:05d}"
            shaded_rel = os.path.join("images", f"{sid}.pgm")
            depth_rel = os.path.join("images", f"{sid}.pfm")
            for rel, writer, img in ((shaded_rel, write_pgm, shaded), (depth_rel, write_pfm, depth)):
                path = os.path.join(out_dir, rel)
                try:
                    writer(path, img)
                except OSError as exc:
                    raise OSError(f"{path}: {exc.strerror}") from exc
            proj = normalize_projection(project(k, pose, corners), k)
            records.append(Record(
                sample_id=sid, mesh_id=m.id,
                viewpoint=[v.azimuth, v.elevation, v.theta],
                rotation=_floats(pose.r), translation=_floats(pose.t), dims=_floats(dims),
                shaded_path=shaded_rel, depth_path=depth_rel,
                projections=[_floats(p) for p in proj], blur=blur_info,
            ))
    manifest = DatasetManifest(records, k, split, seed, os.path.abspath(out_dir))
    manifest.save(os.path.join(out_dir, f"{split}.json"))
    return manifest


def audit_projections(manifest: DatasetManifest, tol=1e-9):
    """Largest deviation between stored and recomputed normalized projections.

    Raises ``AssertionError`` when it exceeds ``tol``.
    """
    k = manifest.intrinsics
    worst = 0.0
    for r in manifest.records:
        proj = normalize_projection(project(k, r.pose, bbox_corners(Dimensions.of(r.dims))), k)
        worst = max(worst, float(np.max(np.abs(proj - np.asarray(r.projections)))))
    if not worst <= tol:
        raise AssertionError(f"projection audit failed: {worst:.3g} > {tol}")
    return worst
