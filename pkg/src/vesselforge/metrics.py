"""Voxelwise overlap scores: Dice, IoU, sensitivity and precision.

The printed Dice formula in the source publication has ``N_TP + N_FP + N_P`` in
the denominator, where ``N_P`` is the predicted-positive count. Taken
literally that collapses to precision, so the standard
``2TP / (2TP + FP + FN)`` is used; it is the only reading consistent with the
reported Dice/IoU pairs (``DSC = 2 IoU / (1 + IoU)``).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .volume import BinaryMask, VolumeError

__all__ = [
    "MetricError",
    "ConfusionCounts",
    "confusion",
    "dsc",
    "iou",
    "sensitivity",
    "precision",
    "score_masks",
    "write_metrics_csv",
    "METRICS_HEADER",
]


class MetricError(ValueError):
    """A score whose denominator is zero for the given masks."""


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def predicted_positive(self) -> int:
        return self.tp + self.fp

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def _bits(m) -> np.ndarray:
    return m.bits if isinstance(m, BinaryMask) else np.asarray(m, dtype=bool)


def confusion(pred, gt) -> ConfusionCounts:
    p, g = _bits(pred), _bits(gt)
    if p.shape != g.shape:
        raise VolumeError(f"dims mismatch: {p.shape} vs {g.shape}")
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    return ConfusionCounts(tp, fp, fn, p.size - tp - fp - fn)


def dsc(c: ConfusionCounts) -> float:
    den = 2 * c.tp + c.fp + c.fn
    if den == 0:
        return 1.0  # both masks empty
    return 2 * c.tp / den


def iou(c: ConfusionCounts) -> float:
    den = c.tp + c.fp + c.fn
    if den == 0:
        return 1.0
    return c.tp / den


def sensitivity(c: ConfusionCounts) -> float:
    if c.tp + c.fn == 0:
        raise MetricError("sensitivity undefined: ground truth is empty")
    return c.tp / (c.tp + c.fn)


def precision(c: ConfusionCounts) -> float:
    if c.tp + c.fp == 0:
        raise MetricError("precision undefined: prediction is empty")
    return c.tp / (c.tp + c.fp)


def score_masks(pred, gt) -> dict[str, float]:
    """All four scores; undefined ones come back as NaN."""
    c = confusion(pred, gt)
    out = {"dsc": dsc(c), "iou": iou(c)}
    for name, fn in (("sensitivity", sensitivity), ("precision", precision)):
        try:
            out[name] = fn(c)
        except MetricError:
            out[name] = math.nan
    return out


METRICS_HEADER = ("scan_id", "dsc", "iou", "sensitivity", "precision")


def _fmt(v: float) -> str:
    return "nan" if math.isnan(v) else f"{v:.4f}"


def write_metrics_csv(rows: Iterable[tuple[str, Mapping[str, float]]], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRICS_HEADER)
        for scan_id, scores in rows:
            w.writerow([scan_id] + [_fmt(scores[k]) for k in METRICS_HEADER[1:]])
    return path
