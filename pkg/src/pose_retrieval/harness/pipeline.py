"""End-to-end evaluation: pose network -> PnP -> viewpoint error, then retrieval per mode."""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError, EmptyInputError, PoseRetrievalError
from ..geometry import Dimensions, geodesic_distance
from ..learning.net import TinyNet
from ..learning.train import depth_to_input
from ..meshio import rescale_to_dims
from ..pnp import Prediction19, estimate_pose
from ..renderer import render_depth
from ..retrieval import RetrievalMode, retrieve
from .dataset import DatasetManifest, PoseRanges
from .metrics import acc_pi6, dim_mae, med_err, top1_acc

log = logging.getLogger(__name__)

ALL_MODES = tuple(RetrievalMode)


@dataclass
class SampleResult:
    sample_id: str
    mesh_id: str
    error: float  # geodesic viewpoint error in radians, pi when estimation failed
    dims_pred: list
    retrieved: dict  # mode value -> top-1 model id, None on failure


@dataclass
class EvalReport:
    """Per-category (mesh id) and mean metrics. Means are unweighted over categories."""

    categories: list
    med_err: dict  # category -> radians
    acc: dict
    top1: dict  # mode value -> {category: fraction}
    dim_mae: list  # per-axis, over all samples
    modes: list
    n_samples: int
    failures: list = field(default_factory=list)  # (sample id, stage, category, message)

    @property
    def mean_med_err(self):
        return float(np.mean([self.med_err[c] for c in self.categories]))

    @property
    def mean_acc(self):
        return float(np.mean([self.acc[c] for c in self.categories]))

    def mean_top1(self, mode):
        mode = RetrievalMode(mode).value
        return float(np.mean([self.top1[mode][c] for c in self.categories]))

    def rows(self):
        """Table rows: one per category, then ``mean``."""
        out = []
        for c in self.categories + ["mean"]:
            if c == "mean":
                me, ac = self.mean_med_err, self.mean_acc
                t1 = [self.mean_top1(m) for m in self.modes]
            else:
                me, ac = self.med_err[c], self.acc[c]
                t1 = [self.top1[m][c] for m in self.modes]
            out.append([c, me, math.degrees(me), ac, *t1])
        return out

    def header(self):
        return ["category", "med_err_rad", "med_err_deg", "acc_pi6"] + [f"top1_{m}" for m in self.modes]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header())
        for r in self.rows():
            w.writerow([r[0]] + [repr(float(x)) for x in r[1:]])
        w.writerow([])
        w.writerow(["dim_mae_x", "dim_mae_y", "dim_mae_z", "n_samples", "n_failures"])
        w.writerow([repr(float(x)) for x in self.dim_mae] + [self.n_samples, len(self.failures)])
        return buf.getvalue()

    def to_table(self) -> str:
        head = self.header()
        lines = ["  ".join(f"{h:>12}" for h in head)]
        for r in self.rows():
            lines.append("  ".join([f"{r[0]:>12}"] + [f"{x:>12.4f}" for x in r[1:]]))
        lines.append("dimension median abs error: " + " ".join(f"{x:.4f}" for x in self.dim_mae))
        lines.append(f"samples: {self.n_samples}  failures: {len(self.failures)}")
        return "\n".join(lines)


NEGATIVE_SCALES = ("rescaled", "own", "both")


def build_depth_bank(manifest: DatasetManifest, meshes, k=None, negative_scale="rescaled"):
    """Depth-network inputs of every mesh under every record's pose.

    The record's own mesh is rendered as is. Other meshes are rescaled into the
    record's box (``"rescaled"``, as online retrieval renders them), kept at
    their own proportions (``"own"``, as the offline database stores them), or
    both (``"both"``, an ``(N, n_meshes, 2, H, W)`` bank with the rescaled
    rendering as variant 0). Returns the float32 bank and the per-record label
    (index of the record's mesh in ``meshes``).
    """
    if negative_scale not in NEGATIVE_SCALES:
        raise ConfigurationError(f"negative scale must be one of {NEGATIVE_SCALES}, got {negative_scale!r}")
    if len(manifest) == 0:
        raise EmptyInputError("empty manifest")
    k = k or manifest.intrinsics
    ids = [m.id for m in meshes]
    labels = np.array([ids.index(r.mesh_id) for r in manifest.records])
    variants = {"rescaled": (True,), "own": (False,), "both": (True, False)}[negative_scale]
    bank = np.empty((len(manifest), len(meshes), len(variants), k.h, k.w), dtype=np.float32)
    for i, r in enumerate(manifest.records):
        for j, m in enumerate(meshes):
            for v, rescale in enumerate(variants):
                if v and m.id == r.mesh_id:
                    bank[i, j, v] = bank[i, j, 0]
                    continue
                mm = rescale_to_dims(m, r.dims) if rescale and m.id != r.mesh_id else m
                bank[i, j, v] = depth_to_input(render_depth(mm, r.pose, k))
    return (bank if len(variants) > 1 else bank[:, :, 0]), labels


def _clip_dims(d):
    return np.clip(np.asarray(d, dtype=float), 1e-3, 1.0)


def evaluate_pipeline(manifest: DatasetManifest, pose_net: TinyNet | None, synth_net: TinyNet, db, meshes,
                      modes=ALL_MODES, k=None, seed=0, ranges: PoseRanges = PoseRanges(), oracle=False):
    """Run every record through pose estimation and retrieval and aggregate an :class:`EvalReport`.

    With ``oracle`` set, ground-truth 19-value targets replace the pose network
    output and the query descriptor is the depth descriptor of the record's own
    depth image. Per-sample failures are recorded in the report.
    """
    if len(manifest) == 0:
        raise EmptyInputError("empty manifest")
    if not oracle and pose_net.config.descriptor_dim != synth_net.config.descriptor_dim:
        raise ConfigurationError("pose and synthetic-domain networks have different descriptor sizes")
    k = k or manifest.intrinsics
    modes = [RetrievalMode(m) for m in modes]
    rng = np.random.default_rng(seed)
    records = manifest.records
    shaded = manifest.shaded_images()
    if oracle:
        preds = manifest.targets()
        queries = synth_net.describe(np.stack([depth_to_input(d) for d in manifest.depth_images()]))
    else:
        preds = pose_net.predict(shaded)
        queries = pose_net.describe(shaded)
    results, failures = [], []
    for r, pred, q in zip(records, preds, queries):
        gt_pose = r.pose
        dims = _clip_dims(pred[16:])
        est = None
        try:
            est, _ = estimate_pose(Prediction19(pred[:16].reshape(8, 2), Dimensions.of(dims)), k)
            err = geodesic_distance(est.r, gt_pose.r)
        except PoseRetrievalError as exc:
            failures.append((r.sample_id, "estimate", exc.category, str(exc)))
            err = math.pi
        retrieved = {}
        for mode in modes:
            # every mode consumes one draw so the random stream does not depend on failures
            sub = np.random.default_rng(rng.integers(2 ** 63))
            if mode is RetrievalMode.GT:
                pose, d = gt_pose, r.dims
            else:
                pose, d = est, dims
            if pose is None and mode is not RetrievalMode.CANO and mode is not RetrievalMode.RAND:
                retrieved[mode.value] = None
                continue
            try:
                ranked = retrieve(q, mode, pose, d, db=db, meshes=meshes, synth_net=synth_net, k=k,
                                  top_k=1, rng=sub, ranges=ranges)
                retrieved[mode.value] = ranked[0][0] if ranked else None
            except PoseRetrievalError as exc:
                failures.append((r.sample_id, f"retrieve:{mode.value}", exc.category, str(exc)))
                retrieved[mode.value] = None
        results.append(SampleResult(r.sample_id, r.mesh_id, err, list(map(float, dims)), retrieved))
    return aggregate(results, [m.value for m in modes], [r.dims for r in records], failures)


def aggregate(results, modes, gt_dims, failures=()):
    """Ordered reduction of per-sample results into an :class:`EvalReport`."""
    if not results:
        raise EmptyInputError("no results to aggregate")
    cats = sorted({s.mesh_id for s in results})
    me, ac, t1 = {}, {}, {m: {} for m in modes}
    for c in cats:
        sel = [s for s in results if s.mesh_id == c]
        errs = [s.error for s in sel]
        me[c] = med_err(errs)
        ac[c] = acc_pi6(errs)
        for m in modes:
            t1[m][c] = top1_acc([(s.retrieved.get(m), s.mesh_id) for s in sel])
    dm = dim_mae([s.dims_pred for s in results], gt_dims)
    return EvalReport(cats, me, ac, t1, [float(x) for x in dm], list(modes), len(results), list(failures))
