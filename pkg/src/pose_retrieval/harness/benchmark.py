"""Desk-scale benchmark: procedural meshes -> data -> both trainings -> database -> evaluation."""
from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import dataclass, field

from ..learning.net import TinyNet, save_weights
from ..learning.train import train_embedders, train_pose
from ..retrieval import build_db
from .config import Config, dump_config
from .dataset import generate_dataset
from .meshes import procedural_meshes, write_meshes
from .pipeline import EvalReport, build_depth_bank, evaluate_pipeline

log = logging.getLogger(__name__)


@dataclass
class BenchmarkResult:
    oracle: EvalReport
    trained: EvalReport
    timings: dict = field(default_factory=dict)  # stage -> seconds


class _Timer:
    def __init__(self):
        self.timings = {}

    def __call__(self, name, fn, *args, **kw):
        t = time.perf_counter()
        out = fn(*args, **kw)
        self.timings[name] = time.perf_counter() - t
        log.info("%s done in %.1f s", name, self.timings[name])
        return out


def run_benchmark(cfg: Config = Config(), out_dir="benchmark_out", log_every=10) -> BenchmarkResult:
    """Run the whole pipeline under ``cfg`` and write every artifact to ``out_dir``."""
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.txt"), "w", encoding="utf-8") as fh:
        fh.write(dump_config(cfg))
    timer = _Timer()
    k = cfg.camera.intrinsics()
    meshes = procedural_meshes()
    write_meshes(os.path.join(out_dir, "meshes"))
    data_dir = os.path.join(out_dir, "data")
    train = timer("gen_train", generate_dataset, meshes, cfg.data.n_train, data_dir, cfg.ranges, k,
                  seed=cfg.data.train_seed, blur=cfg.blur, split="train")
    val = timer("gen_val", generate_dataset, meshes, cfg.data.n_val, data_dir, cfg.ranges, k,
                seed=cfg.data.val_seed, blur=cfg.blur, split="val")
    images = train.shaded_images()

    pose_net = TinyNet(cfg.pose_net, seed=cfg.seed)
    pose_res = timer("train_pose", train_pose, images, train.targets(), pose_net, cfg.loss, cfg.pose,
                     log_every=log_every)
    bank, labels = timer("depth_bank", build_depth_bank, train, meshes, k, cfg.negative_scale)
    synth_net = TinyNet(cfg.synth_net, seed=cfg.seed + 1)
    embed_res = timer("train_embed", train_embedders, images, labels, bank, pose_net, synth_net, cfg.loss,
                      cfg.embed, log_every=log_every)
    del bank
    db = timer("build_db", build_db, meshes, cfg.grid, synth_net, k, cfg.db_tz)

    oracle = timer("eval_oracle", evaluate_pipeline, val, None, synth_net, db, meshes, k=k, seed=cfg.seed,
                   ranges=cfg.ranges, oracle=True)
    trained = timer("eval_trained", evaluate_pipeline, val, pose_net, synth_net, db, meshes, k=k,
                    seed=cfg.seed, ranges=cfg.ranges)

    save_weights(pose_net, os.path.join(out_dir, "pose_net.wpnn"))
    save_weights(synth_net, os.path.join(out_dir, "synth_net.wpnn"))
    db.save(os.path.join(out_dir, "db.wpdb"))
    pose_res.write_csv(os.path.join(out_dir, "pose_trace.csv"))
    embed_res.write_csv(os.path.join(out_dir, "embed_trace.csv"))
    for name, rep in (("oracle", oracle), ("trained", trained)):
        with open(os.path.join(out_dir, f"report_{name}.csv"), "w", encoding="utf-8") as fh:
            fh.write(rep.to_csv())
    timer.timings["total"] = sum(timer.timings.values())
    with open(os.path.join(out_dir, "timings.json"), "w", encoding="utf-8") as fh:
        json.dump(timer.timings, fh, indent=1, sort_keys=True)
    return BenchmarkResult(oracle, trained, timer.timings)
