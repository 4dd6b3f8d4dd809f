"""Stage 1: pose regression on camera-domain images. Stage 2: depth-domain
descriptor network trained with a triplet loss against the frozen stage-1
descriptors."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from ..errors import EmptyInputError, InsufficientNegativesError, ShapeError
from ..renderer import gaussian_blur
from .losses import LossConfig, pose_head_loss, triplet_batch_loss
from .net import TinyNet
from .optim import AdamState, adam_step

log = logging.getLogger(__name__)

DEPTH_REFERENCE = 5.0


@dataclass(frozen=True)
class TrainSchedule:
    batch_size: int = 16
    epochs: int = 60
    lr: float = 1e-4
    decay_epochs: tuple = (30, 54)
    decay_factor: float = 0.1
    seed: int = 0
    # blur augmentation, redrawn every epoch
    blur_prob: float = 0.0
    blur_sigma: tuple = (0.5, 1.5)
    blur_ksizes: tuple = (3, 5)
    # pose training only: crop jitter in whole pixels and in-plane rotation
    # about the image center in degrees, both redrawn every epoch
    jitter_px: int = 0
    rotate_deg: float = 0.0

    @classmethod
    def full_scale(cls, **kw):
        """Batch 50, 100 epochs, lr 1e-4 divided by 10 after epochs 50 and 90."""
        return cls(batch_size=50, epochs=100, lr=1e-4, decay_epochs=(50, 90), **kw)

    def lr_at(self, epoch):
        return self.lr * self.decay_factor ** sum(epoch >= e for e in self.decay_epochs)


@dataclass
class TrainResult:
    net: TinyNet
    trace: list = field(default_factory=list)  # per-epoch mean objective
    aux_trace: list = field(default_factory=list)  # per-epoch mean data term

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "loss", "data_loss"])
            for i, (a, b) in enumerate(zip(self.trace, self.aux_trace)):
                w.writerow([i, repr(float(a)), repr(float(b))])


def depth_to_input(depth, reference=DEPTH_REFERENCE):
    """Map depth images to network inputs: ``reference / z`` on covered pixels, 0 elsewhere."""
    d = np.asarray(depth, dtype=np.float64)
    out = np.zeros_like(d)
    np.divide(reference, d, out=out, where=d > 0)
    return out


def _augment(batch, rng, schedule):
    if schedule.blur_prob <= 0:
        return batch
    out = np.array(batch, dtype=np.float64)
    for i in range(len(out)):
        if rng.random() < schedule.blur_prob:
            sigma = rng.uniform(*schedule.blur_sigma)
            k = int(rng.choice(schedule.blur_ksizes))
            out[i] = gaussian_blur(out[i], sigma, k)
    return out


def shift_image(img, dx, dy):
    """Translate an image by whole pixels, filling with background."""
    h, w = img.shape
    out = np.zeros_like(img)
    if abs(dx) >= w or abs(dy) >= h:
        return out
    out[max(0, dy):h + min(0, dy), max(0, dx):w + min(0, dx)] = \
        img[max(0, -dy):h + min(0, -dy), max(0, -dx):w + min(0, -dx)]
    return out


def _jitter(batch, targets, rng, max_px):
    """Shift each crop and its normalized corner targets by the same random offset."""
    if max_px <= 0:
        return batch, targets
    out = np.empty(batch.shape, dtype=np.float64)
    t = np.array(targets, dtype=np.float64)
    h, w = batch.shape[1:]
    shifts = rng.integers(-max_px, max_px + 1, size=(len(batch), 2))
    for i, (dx, dy) in enumerate(shifts):
        out[i] = shift_image(batch[i], dx, dy)
        t[i, 0:16:2] += dx / w
        t[i, 1:16:2] += dy / h
    return out, t


def rotate_image(img, angle):
    """Rotate an image by ``angle`` radians about its center (bilinear, background 0).

    With the principal point at the image center this is the image of the same
    scene seen by a camera rolled about its optical axis, so a point at pixel
    ``p`` moves to ``c + R(angle) (p - c)``.
    """
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    c, s = np.cos(angle), np.sin(angle)
    qy, qx = np.mgrid[0:h, 0:w] + 0.5
    dx, dy = qx - w / 2.0, qy - h / 2.0
    # inverse map: output pixel center -> source position in index coordinates
    sx = c * dx + s * dy + w / 2.0 - 0.5
    sy = -s * dx + c * dy + h / 2.0 - 0.5
    x0, y0 = np.floor(sx).astype(int), np.floor(sy).astype(int)
    fx, fy = sx - x0, sy - y0
    padded = np.pad(img, 1)
    out = np.zeros_like(img)
    for oy, wy in ((0, 1.0 - fy), (1, fy)):
        for ox, wx in ((0, 1.0 - fx), (1, fx)):
            yy = np.clip(y0 + oy + 1, 0, h + 1)
            xx = np.clip(x0 + ox + 1, 0, w + 1)
            out += wy * wx * padded[yy, xx]
    return out


def rotate_targets(targets, angle, w, h):
    """Corner targets of :func:`rotate_image`: rotate normalized projections about the center."""
    t = np.array(targets, dtype=np.float64)
    px = t[..., 0:16:2] * w - w / 2.0
    py = t[..., 1:16:2] * h - h / 2.0
    c, s = np.cos(angle), np.sin(angle)
    t[..., 0:16:2] = (c * px - s * py + w / 2.0) / w
    t[..., 1:16:2] = (s * px + c * py + h / 2.0) / h
    return t


def _rotate(batch, targets, rng, max_deg):
    if max_deg <= 0:
        return batch, targets
    out = np.empty(batch.shape, dtype=np.float64)
    t = np.array(targets, dtype=np.float64)
    h, w = batch.shape[1:]
    for i, a in enumerate(np.radians(rng.uniform(-max_deg, max_deg, size=len(batch)))):
        out[i] = rotate_image(batch[i], a)
        t[i] = rotate_targets(t[i], a, w, h)
    return out, t


def _batches(n, batch_size, rng):
    order = rng.permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def train_pose(images, targets, net: TinyNet, cfg: LossConfig = LossConfig(),
               schedule: TrainSchedule = TrainSchedule(), init_head_bias=True, log_every=10):
    """Minimize the pose objective (projection + dimension Huber terms + weight decay).

    ``images`` is ``(N, H, W)``, ``targets`` is ``(N, 19)`` (16 normalized corner
    coordinates, then 3 dimensions). The head bias starts at the target mean
    when ``init_head_bias`` is set. Blur augmentation, when enabled, is redrawn
    for every epoch.
    """
    images = np.asarray(images)
    targets = np.asarray(targets, dtype=np.float64)
    if len(images) == 0:
        raise EmptyInputError("empty training set")
    if targets.shape != (len(images), 19):
        raise ShapeError(f"targets must be (N, 19), got {targets.shape}")
    if net.head is None:
        raise ShapeError("pose training needs a network with a 19-value head")
    if init_head_bias:
        net.head.b[:] = targets.mean(axis=0).astype(net.dtype)
    rng = np.random.default_rng(schedule.seed)
    state = AdamState()
    result = TrainResult(net)
    for epoch in range(schedule.epochs):
        lr = schedule.lr_at(epoch)
        tot, data_tot, count = 0.0, 0.0, 0
        for idx in _batches(len(images), schedule.batch_size, rng):
            x, y = _rotate(images[idx], targets[idx], rng, schedule.rotate_deg)
            x, y = _jitter(x, y, rng, schedule.jitter_px)
            x = _augment(x, rng, schedule)
            _, head, cache = net.forward(x, keep_cache=True)
            data_l, d_head = pose_head_loss(head, y, cfg)
            grads = net.backward(cache, d_head=d_head)
            params = net.params
            grads = [g + 2.0 * cfg.beta * p for g, p in zip(grads, params)]
            loss = data_l + cfg.beta * net.weight_sq_norm()
            adam_step(params, grads, state, lr)
            tot += loss * len(idx)
            data_tot += data_l * len(idx)
            count += len(idx)
        result.trace.append(tot / count)
        result.aux_trace.append(data_tot / count)
        if log_every and (epoch % log_every == 0 or epoch == schedule.epochs - 1):
            log.info("pose epoch %d lr %.1e loss %.6f", epoch, lr, result.trace[-1])
    return result


def train_embedders(real_images, labels, depth_bank, real_net: TinyNet, synth_net: TinyNet,
                    cfg: LossConfig = LossConfig(), schedule: TrainSchedule = TrainSchedule(),
                    log_every=10):
    """Train ``synth_net`` so depth descriptors land near the frozen camera-domain descriptors.

    ``depth_bank[i, j]`` is the (preprocessed) depth image of model ``j`` under
    the pose of sample ``i``; ``labels[i]`` is the model shown in
    ``real_images[i]``. A bank of shape ``(N, M, V, H, W)`` holds ``V`` renderings
    per model: positives use variant 0 and negatives a uniformly drawn variant.
    Each epoch draws one negative model per sample uniformly from the other
    models. ``real_net`` is only read.
    """
    labels = np.asarray(labels)
    depth_bank = np.asarray(depth_bank)
    if depth_bank.ndim == 4:
        depth_bank = depth_bank[:, :, None]
    n_variants = depth_bank.shape[2]
    n = len(labels)
    if n == 0:
        raise EmptyInputError("empty training set")
    n_models = depth_bank.shape[1]
    if len(np.unique(labels)) < 2 or n_models < 2:
        raise InsufficientNegativesError("triplet training needs at least 2 distinct models")
    if depth_bank.shape[0] != n:
        raise ShapeError("depth bank and labels disagree on sample count")
    anchors = real_net.describe(real_images).astype(np.float64)
    rng = np.random.default_rng(schedule.seed)
    state = AdamState()
    result = TrainResult(synth_net)
    rows = np.arange(n)
    for epoch in range(schedule.epochs):
        lr = schedule.lr_at(epoch)
        neg = (labels + rng.integers(1, n_models, size=n)) % n_models
        neg_var = rng.integers(0, n_variants, size=n) if n_variants > 1 else np.zeros(n, dtype=int)
        tot, data_tot = 0.0, 0.0
        for idx in _batches(n, schedule.batch_size, rng):
            b = len(idx)
            x = np.concatenate([depth_bank[rows[idx], labels[idx], 0], depth_bank[rows[idx], neg[idx], neg_var[idx]]])
            feat, _, cache = synth_net.forward(x, keep_cache=True)
            data_l, g_pos, g_neg, _, _ = triplet_batch_loss(anchors[idx], feat[:b].astype(np.float64),
                                                            feat[b:].astype(np.float64), cfg.margin)
            grads = synth_net.backward(cache, d_features=np.concatenate([g_pos, g_neg]))
            params = synth_net.params
            grads = [g + 2.0 * cfg.gamma * p for g, p in zip(grads, params)]
            loss = data_l + cfg.gamma * synth_net.weight_sq_norm()
            adam_step(params, grads, state, lr)
            tot += loss * b
            data_tot += data_l * b
        result.trace.append(tot / n)
        result.aux_trace.append(data_tot / n)
        if log_every and (epoch % log_every == 0 or epoch == schedule.epochs - 1):
            log.info("embed epoch %d lr %.1e loss %.6f triplet %.6f", epoch, lr, result.trace[-1], result.aux_trace[-1])
    return result
