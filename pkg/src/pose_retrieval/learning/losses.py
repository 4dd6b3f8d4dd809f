"""Pose and similarity losses with their derivatives."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ParameterError, ShapeError


@dataclass(frozen=True)
class LossConfig:
    alpha: float = 1.0  # dimension loss weight
    beta: float = 1e-5  # weight decay, pose network
    gamma: float = 1e-3  # weight decay, synthetic-domain network
    margin: float = 1.0
    huber_delta: float = 0.01

    def __post_init__(self):
        for name, v in vars(self).items():
            if not v > 0:
                raise ParameterError(f"{name} must be positive, got {v}")


def huber(r, delta):
    """Elementwise Huber value and derivative; works on scalars and arrays."""
    if not delta > 0:
        raise ParameterError("huber delta must be positive")
    r = np.asarray(r, dtype=float)
    a = np.abs(r)
    quad = a <= delta
    value = np.where(quad, 0.5 * r * r, delta * (a - 0.5 * delta))
    deriv = np.where(quad, r, delta * np.sign(r))
    if value.ndim == 0:
        return float(value), float(deriv)
    return value, deriv


def _huber_sum(pred, gt, delta, shape, name):
    pred = np.asarray(pred, dtype=float)
    gt = np.asarray(gt, dtype=float)
    if pred.shape != gt.shape or pred.shape[-len(shape):] != shape:
        raise ShapeError(f"{name}: shapes {pred.shape} and {gt.shape} do not match {shape}")
    v, _ = huber(pred - gt, delta)
    return float(np.sum(v))


def proj_loss(pred, gt, delta=0.01) -> float:
    """Sum of componentwise Huber terms over the 8 normalized corner projections."""
    return _huber_sum(pred, gt, delta, (8, 2), "proj_loss")


def dim_loss(pred, gt, delta=0.01) -> float:
    return _huber_sum(pred, gt, delta, (3,), "dim_loss")


def pose_loss(proj_l, dim_l, weight_sq_norm, cfg: LossConfig = LossConfig()) -> float:
    return proj_l + cfg.alpha * dim_l + cfg.beta * weight_sq_norm


def triplet_loss(s_plus, s_minus, m):
    """Hinge ``max(0, s+ - s- + m)`` and its (sub)gradients w.r.t. ``s+`` and ``s-``."""
    s_plus = np.asarray(s_plus, dtype=float)
    s_minus = np.asarray(s_minus, dtype=float)
    z = s_plus - s_minus + m
    active = z > 0
    value = np.where(active, z, 0.0)
    d_plus = active.astype(float)
    d_minus = -d_plus
    if value.ndim == 0:
        return float(value), float(d_plus), float(d_minus)
    return value, d_plus, d_minus


def similarity_loss(descr_l, weight_sq_norm, cfg: LossConfig = LossConfig()) -> float:
    return descr_l + cfg.gamma * weight_sq_norm


def pose_head_loss(head, targets, cfg: LossConfig):
    """Batch-mean of proj + alpha * dim Huber terms and its gradient w.r.t. the head.

    ``head`` and ``targets`` are ``(N, 19)``: 16 normalized projections then 3 dims.
    Weight decay is added by the caller.
    """
    head = np.asarray(head, dtype=float)
    n = head.shape[0]
    v, d = huber(head - np.asarray(targets, dtype=float), cfg.huber_delta)
    w = np.ones(19)
    w[16:] = cfg.alpha
    value = float(np.sum(v * w)) / n
    return value, (d * w) / n


def triplet_batch_loss(anchor, positive, negative, margin, eps=1e-12):
    """Batch-mean triplet loss on Euclidean distances.

    Returns ``(loss, d_positive, d_negative, s_plus, s_minus)`` where the
    gradients are w.r.t. the positive and negative descriptors.
    """
    dp = positive - anchor
    dn = negative - anchor
    s_plus = np.sqrt(np.sum(dp * dp, axis=1))
    s_minus = np.sqrt(np.sum(dn * dn, axis=1))
    n = anchor.shape[0]
    value, g_plus, g_minus = triplet_loss(s_plus, s_minus, margin)
    g_pos = (g_plus / np.maximum(s_plus, eps) / n)[:, None] * dp
    g_neg = (g_minus / np.maximum(s_minus, eps) / n)[:, None] * dn
    return float(np.mean(value)), g_pos, g_neg, s_plus, s_minus
