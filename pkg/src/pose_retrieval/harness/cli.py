"""Command-line interface.

Every subcommand reads the same flat config (``--config``) and writes into
``--out``. Failures exit with status 2 and print one line
``error: <category>: <message>`` on stderr.
"""
from __future__ import annotations

import argparse
import dataclasses
import glob
import json
import logging
import math
import os
import sys

import numpy as np

from ..errors import ConfigurationError, EmptyInputError, PoseRetrievalError
from ..geometry import Dimensions
from ..images import read_pgm, write_pgm
from ..learning.net import TinyNet, load_weights, save_weights
from ..learning.train import train_embedders, train_pose
from ..meshio import load_obj
from ..pnp import Prediction19, estimate_pose
from ..retrieval import DescriptorDB, RetrievalMode, align_render, build_db, retrieve
from .config import Config, apply_overrides, dump_config, load_config
from .dataset import DatasetManifest, generate_dataset
from .meshes import procedural_meshes, write_meshes
from .pipeline import build_depth_bank, evaluate_pipeline


def load_mesh_dir(path):
    """Every ``*.obj`` under ``path``, id = file stem, sorted by id."""
    files = sorted(glob.glob(os.path.join(path, "*.obj")))
    if not files:
        raise EmptyInputError(f"no .obj files in {path}")
    return [load_obj(f, os.path.splitext(os.path.basename(f))[0]) for f in files]


def _meshes(args):
    return load_mesh_dir(args.meshes) if args.meshes else procedural_meshes()


def _out(args, name):
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, name)


def _estimate(net, img, k):
    pred = net.predict(img)
    dims = np.clip(pred[16:], 1e-3, 1.0)
    pose, dims = estimate_pose(Prediction19(pred[:16].reshape(8, 2), Dimensions.of(dims)), k)
    return pose, dims


# -- subcommands ------------------------------------------------------------

def cmd_gen_meshes(args, cfg):
    for p in write_meshes(args.out):
        print(p)


def cmd_gen_data(args, cfg):
    n = args.n if args.n is not None else (cfg.data.n_train if args.split == "train" else cfg.data.n_val)
    seed = args.seed if args.seed is not None else (cfg.data.train_seed if args.split == "train" else cfg.data.val_seed)
    m = generate_dataset(_meshes(args), n, args.out, cfg.ranges, cfg.camera.intrinsics(), seed=seed,
                         blur=cfg.blur, split=args.split)
    print(f"{len(m)} records -> {os.path.join(args.out, args.split + '.json')}")


def cmd_train_pose(args, cfg):
    data = DatasetManifest.load(args.data)
    net = TinyNet(cfg.pose_net, seed=cfg.seed)
    res = train_pose(data.shaded_images(), data.targets(), net, cfg.loss, cfg.pose)
    save_weights(net, _out(args, "pose_net.wpnn"))
    res.write_csv(_out(args, "pose_trace.csv"))
    print(f"final loss {res.trace[-1]:.6g} -> {_out(args, 'pose_net.wpnn')}")


def cmd_train_embed(args, cfg):
    data = DatasetManifest.load(args.data)
    pose_net = load_weights(args.pose_weights)
    meshes = _meshes(args)
    bank, labels = build_depth_bank(data, meshes, data.intrinsics, cfg.negative_scale)
    net = TinyNet(cfg.synth_net, seed=cfg.seed + 1)
    res = train_embedders(data.shaded_images(), labels, bank, pose_net, net, cfg.loss, cfg.embed)
    save_weights(net, _out(args, "synth_net.wpnn"))
    res.write_csv(_out(args, "embed_trace.csv"))
    print(f"final loss {res.trace[-1]:.6g} -> {_out(args, 'synth_net.wpnn')}")


def cmd_build_db(args, cfg):
    net = load_weights(args.synth_weights)
    db = build_db(_meshes(args), cfg.grid, net, cfg.camera.intrinsics(), cfg.db_tz)
    db.save(_out(args, "db.wpdb"))
    print(f"{len(db)} entries -> {_out(args, 'db.wpdb')}")


def cmd_estimate(args, cfg):
    k = cfg.camera.intrinsics()
    pose, dims = _estimate(load_weights(args.pose_weights), read_pgm(args.image), k)
    v = pose.viewpoint
    print(json.dumps({
        "rotation": pose.r.tolist(), "translation": pose.t.tolist(),
        "viewpoint_deg": [math.degrees(a) for a in (v.azimuth, v.elevation, v.theta)],
        "dims": [float(x) for x in Dimensions.of(dims).as_array()],
    }, indent=1))


def cmd_retrieve(args, cfg):
    k = cfg.camera.intrinsics()
    img = read_pgm(args.image)
    pose_net = load_weights(args.pose_weights)
    mode = RetrievalMode(args.mode)
    pose, dims = _estimate(pose_net, img, k)
    synth = load_weights(args.synth_weights) if args.synth_weights else None
    db = DescriptorDB.load(args.db) if args.db else None
    if mode is RetrievalMode.GT:
        raise ConfigurationError("gt mode needs annotations; use eval on a manifest")
    ranked = retrieve(pose_net.describe(img), mode, pose, dims, db=db,
                      meshes=_meshes(args) if mode is not RetrievalMode.OFF else None,
                      synth_net=synth, k=k, top_k=args.top_k, rng=np.random.default_rng(cfg.seed),
                      ranges=cfg.ranges)
    for mid, dist in ranked:
        print(f"{mid}\t{dist:.6f}")


def cmd_align(args, cfg):
    k = cfg.camera.intrinsics()
    img = read_pgm(args.image)
    pose, dims = _estimate(load_weights(args.pose_weights), img, k)
    render = align_render(load_obj(args.mesh, "query"), pose, dims, k)
    write_pgm(_out(args, "aligned.pgm"), render)
    # side-by-side: input | render
    write_pgm(_out(args, "overlay.pgm"), np.concatenate([img, render], axis=1))
    print(_out(args, "aligned.pgm"))


def cmd_eval(args, cfg):
    if args.pose_weights is None and not args.oracle:
        raise ConfigurationError("eval needs --pose-weights unless --oracle is given")
    data = DatasetManifest.load(args.data)
    synth = load_weights(args.synth_weights)
    pose_net = None if args.oracle else load_weights(args.pose_weights)
    db = DescriptorDB.load(args.db) if args.db else None
    modes = [RetrievalMode(m) for m in args.modes.split(",")] if args.modes else list(RetrievalMode)
    if db is None and RetrievalMode.OFF in modes:
        raise ConfigurationError("off mode needs --db")
    rep = evaluate_pipeline(data, pose_net, synth, db, _meshes(args), modes=modes, k=data.intrinsics,
                            seed=cfg.seed, ranges=cfg.ranges, oracle=args.oracle)
    with open(_out(args, "report.csv"), "w", encoding="utf-8") as fh:
        fh.write(rep.to_csv())
    print(rep.to_table())


def cmd_dump_config(args, cfg):
    sys.stdout.write(dump_config(cfg))


# -- parser -----------------------------------------------------------------

def build_parser():
    def global_flags(parser, suppress):
        # sub-command copies must not overwrite values given before the sub-command
        d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
        parser.add_argument("--seed", type=int, default=d(None),
                            help="global seed; for gen-data it replaces the split's generator seed")
        parser.add_argument("--config", default=d(None), help="flat key=value config file")
        parser.add_argument("--set", action="append", default=d([]), metavar="KEY=VALUE", help="config override")
        parser.add_argument("--out", default=d("."), help="output directory")
        parser.add_argument("-v", "--verbose", action="store_true", default=d(False))

    common = argparse.ArgumentParser(add_help=False)
    global_flags(common, suppress=True)
    p = argparse.ArgumentParser(prog="pose-retrieval", description=__doc__.splitlines()[0])
    global_flags(p, suppress=False)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_, parents=[common])
        sp.set_defaults(fn=fn)
        return sp

    add("gen-meshes", cmd_gen_meshes, "write the procedural OBJ corpus")
    sp = add("gen-data", cmd_gen_data, "render a dataset split")
    sp.add_argument("--meshes", help="directory of OBJ files (default: procedural corpus)")
    sp.add_argument("--n", type=int, help="views per mesh")
    sp.add_argument("--split", default="train", choices=["train", "val"])
    sp = add("train-pose", cmd_train_pose, "train the pose network")
    sp.add_argument("--data", required=True, help="training manifest")
    sp = add("train-embed", cmd_train_embed, "train the depth-domain descriptor network")
    sp.add_argument("--data", required=True)
    sp.add_argument("--pose-weights", required=True)
    sp.add_argument("--meshes")
    sp = add("build-db", cmd_build_db, "precompute the pose-binned descriptor database")
    sp.add_argument("--synth-weights", required=True)
    sp.add_argument("--meshes")
    for name, fn, help_ in (("estimate", cmd_estimate, "estimate the 6-DoF pose of one image"),
                            ("retrieve", cmd_retrieve, "rank models for one image"),
                            ("align", cmd_align, "render a model aligned to one image")):
        sp = add(name, fn, help_)
        sp.add_argument("--image", required=True, help="PGM crop")
        sp.add_argument("--pose-weights", required=True)
        if name == "retrieve":
            sp.add_argument("--mode", default="pred", choices=[m.value for m in RetrievalMode])
            sp.add_argument("--top-k", type=int, default=5)
            sp.add_argument("--synth-weights")
            sp.add_argument("--db")
            sp.add_argument("--meshes")
        if name == "align":
            sp.add_argument("--mesh", required=True, help="OBJ file")
    sp = add("eval", cmd_eval, "evaluate a manifest and write report.csv")
    sp.add_argument("--data", required=True)
    sp.add_argument("--pose-weights")
    sp.add_argument("--synth-weights", required=True)
    sp.add_argument("--db")
    sp.add_argument("--meshes")
    sp.add_argument("--modes", help="comma-separated subset of gt,pred,off,cano,rand")
    sp.add_argument("--oracle", action="store_true", help="inject ground truth as network output")
    add("dump-config", cmd_dump_config, "print the effective config")
    return p


def _config(args):
    cfg = load_config(args.config) if args.config else Config()
    pairs = []
    for item in args.set:
        if "=" not in item:
            raise ConfigurationError(f"--set expects KEY=VALUE, got {item!r}")
        pairs.append(tuple(item.split("=", 1)))
    cfg = apply_overrides(cfg, pairs)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        args.fn(args, _config(args))
    except PoseRetrievalError as exc:
        print(f"error: {exc.category}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
