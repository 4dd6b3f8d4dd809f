"""Viewpoint, retrieval and dimension metrics."""
from __future__ import annotations

import math

import numpy as np

from ..errors import EmptyInputError, ShapeError

PI_6 = math.pi / 6.0


def med_err(errors) -> float:
    e = np.asarray(errors, dtype=float)
    if e.size == 0:
        raise EmptyInputError("med_err of no errors")
    return float(np.median(e))


def acc_pi6(errors) -> float:
    """Fraction of errors strictly below pi/6."""
    e = np.asarray(errors, dtype=float)
    if e.size == 0:
        raise EmptyInputError("acc_pi6 of no errors")
    return float(np.count_nonzero(e < PI_6)) / e.size


def top1_acc(results) -> float:
    """Fraction of ``(retrieved_id, gt_id)`` pairs that agree."""
    results = list(results)
    if not results:
        raise EmptyInputError("top1_acc of no results")
    return sum(1 for got, want in results if got == want) / len(results)


def dim_mae(pred, gt):
    """Per-axis median absolute error of predicted box dimensions."""
    p = np.asarray(pred, dtype=float)
    g = np.asarray(gt, dtype=float)
    if p.shape != g.shape or p.ndim != 2 or p.shape[1] != 3:
        raise ShapeError(f"dimension lists must be (N, 3) and equal, got {p.shape} and {g.shape}")
    if len(p) == 0:
        raise EmptyInputError("dim_mae of no dimensions")
    return np.median(np.abs(p - g), axis=0)
