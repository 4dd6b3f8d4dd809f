"""Experiment configuration: nested dataclasses read from a flat ``section.field = value`` file.

Example::

    # comments and blank lines are ignored
    seed = 3
    pose.lr = 1e-3
    pose_net.channels = 16, 32, 64, 64
    grid.elevation = -30, 60
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from ..errors import ConfigurationError, ParseError
from ..geometry import CameraIntrinsics
from ..learning.losses import LossConfig
from ..learning.net import NetConfig
from ..learning.train import TrainSchedule
from ..retrieval import PoseBinGrid
from .dataset import BlurPolicy, PoseRanges
from .pipeline import NEGATIVE_SCALES


@dataclass(frozen=True)
class CameraConfig:
    w: int = 64
    h: int = 64
    focal_scale: float = 1.2

    def intrinsics(self) -> CameraIntrinsics:
        return CameraIntrinsics.default(self.w, self.h, self.focal_scale)


@dataclass(frozen=True)
class DataConfig:
    n_train: int = 200
    n_val: int = 50
    train_seed: int = 1
    val_seed: int = 2


@dataclass(frozen=True)
class Config:
    seed: int = 0
    db_tz: float = 2.2
    negative_scale: str = "own"  # how triplet negatives are scaled: rescaled, own or both
    camera: CameraConfig = CameraConfig()
    data: DataConfig = DataConfig()
    ranges: PoseRanges = PoseRanges(tz=(2.0, 2.4), lateral=0.02)
    blur: BlurPolicy = BlurPolicy()
    loss: LossConfig = LossConfig()
    pose_net: NetConfig = NetConfig(channels=(16, 32, 64, 64))
    synth_net: NetConfig = NetConfig(channels=(8, 16, 32, 32), head_dim=0)
    pose: TrainSchedule = TrainSchedule(lr=1e-3, epochs=100, decay_epochs=(50, 90), jitter_px=4, blur_prob=0.3,
                                        rotate_deg=20.0)
    embed: TrainSchedule = TrainSchedule(lr=1e-3, epochs=60, decay_epochs=(30, 54))
    grid: PoseBinGrid = PoseBinGrid(elevation=(-30, 60))

    def __post_init__(self):
        if self.negative_scale not in NEGATIVE_SCALES:
            raise ConfigurationError(f"negative_scale must be one of {NEGATIVE_SCALES}, got {self.negative_scale!r}")


SECTIONS = {f.name for f in dataclasses.fields(Config) if dataclasses.is_dataclass(f.default)}


def _convert(text, like, key):
    text = text.strip()
    try:
        if isinstance(like, bool):
            if text.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return text.lower() in ("true", "1", "yes")
        if isinstance(like, int):
            return int(text)
        if isinstance(like, float):
            return float(text)
        if isinstance(like, tuple):
            parts = [p for p in text.replace("(", "").replace(")", "").split(",") if p.strip()]
            elem = like[0] if like else 0.0
            return tuple(_convert(p, elem, key) for p in parts)
        return text
    except ValueError:
        raise ConfigurationError(f"{key}: cannot read {text!r} as {type(like).__name__}") from None


def apply_overrides(cfg: Config, pairs) -> Config:
    """Apply ``(key, value_text)`` pairs to ``cfg`` and return the new config."""
    top = {}
    nested = {}
    for key, value in pairs:
        if "." in key:
            sec, name = key.split(".", 1)
            if sec not in SECTIONS:
                raise ConfigurationError(f"unknown config section {sec!r}")
            sub = getattr(cfg, sec)
            names = {f.name for f in dataclasses.fields(sub)}
            if name not in names:
                raise ConfigurationError(f"unknown config key {key!r}")
            nested.setdefault(sec, {})[name] = _convert(value, getattr(sub, name), key)
        else:
            if key in SECTIONS or key not in {f.name for f in dataclasses.fields(cfg)}:
                raise ConfigurationError(f"unknown config key {key!r}")
            top[key] = _convert(value, getattr(cfg, key), key)
    for sec, values in nested.items():
        try:
            top[sec] = dataclasses.replace(getattr(cfg, sec), **values)
        except ValueError as exc:
            raise ConfigurationError(f"{sec}: {exc}") from None
    return dataclasses.replace(cfg, **top)


def parse_config(text: str, base: Config | None = None) -> Config:
    pairs = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected key = value, got {line!r}", lineno)
        key, value = line.split("=", 1)
        pairs.append((key.strip(), value))
    return apply_overrides(base or Config(), pairs)


def load_config(path, base: Config | None = None) -> Config:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), base)


def dump_config(cfg: Config) -> str:
    """Flat text form; ``parse_config(dump_config(c)) == c``."""
    lines = []
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if f.name in SECTIONS:
            for g in dataclasses.fields(v):
                lines.append(f"{f.name}.{g.name} = {_fmt(getattr(v, g.name))}")
        else:
            lines.append(f"{f.name} = {_fmt(v)}")
    return "\n".join(lines) + "\n"


def _fmt(v):
    if isinstance(v, tuple):
        return ", ".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)
