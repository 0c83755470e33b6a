"""Logistic voxel classifier trained by momentum SGD under the hard-region CE loss.

The hard-region adaptive loss only looks at voxels whose absolute error
``|y - p|`` exceeds a threshold ``T``; easy voxels drop out of both the loss and
its gradient. With ``T = 0`` every imperfectly predicted voxel counts and the
loss is plain mean binary cross-entropy.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy.special import expit

from .features import FeatureVolume
from .metrics import confusion, dsc
from .volume import BinaryMask, Spacing, VolumeError

__all__ = [
    "TrainingError",
    "VoxelClassifier",
    "TrainConfig",
    "Checkpoint",
    "TrainResult",
    "ProbabilityVolume",
    "predict_probs",
    "binarize",
    "hra_ce_loss",
    "hra_ce_gradient",
    "VoxelPool",
    "build_pool",
    "train",
    "save_checkpoint",
    "load_checkpoint",
]

log = logging.getLogger(__name__)

EPS = 1e-7


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class VoxelClassifier:
    w: np.ndarray
    b: float

    def __post_init__(self):
        w = np.array(self.w, dtype=np.float64).ravel()
        if not (np.all(np.isfinite(w)) and math.isfinite(self.b)):
            raise TrainingError("classifier parameters must be finite")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "b", float(self.b))

    @classmethod
    def zeros(cls, n_features: int) -> "VoxelClassifier":
        return cls(np.zeros(n_features), 0.0)

    @property
    def n_features(self) -> int:
        return int(self.w.size)

    def __eq__(self, other):
        if not isinstance(other, VoxelClassifier):
            return NotImplemented
        return self.b == other.b and np.array_equal(self.w, other.w)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.01
    momentum: float = 0.99
    weight_decay: float = 3e-5
    epochs: int = 1000
    batch_size: int = 512
    hra_threshold: float = 0.1
    checkpoint_every: int = 100
    seed: int = 0
    steps_per_epoch: int = 1
    samples_per_scan: int = 8000
    binarize_threshold: float = 0.5
    lr_schedule: str = "poly"  # "poly": lr * (1 - (epoch - 1) / epochs) ** 0.9; "constant"

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("lr must be > 0")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if not 0 <= self.hra_threshold < 1:
            raise ValueError("hra_threshold must lie in [0, 1)")
        if self.checkpoint_every < 1 or self.epochs < 1 or self.steps_per_epoch < 1:
            raise ValueError("epochs, steps_per_epoch and checkpoint_every must be >= 1")
        if self.batch_size < 2 or self.samples_per_scan < 2:
            raise ValueError("batch_size and samples_per_scan must be >= 2")
        if not 0 < self.binarize_threshold < 1:
            raise ValueError("binarize_threshold must lie in (0, 1)")
        if self.lr_schedule not in ("poly", "constant"):
            raise ValueError(f"lr_schedule must be 'poly' or 'constant', got {self.lr_schedule!r}")

    def lr_at(self, epoch: int) -> float:
        """Learning rate used throughout 1-based ``epoch``."""
        if self.lr_schedule == "constant":
            return self.lr
        return self.lr * (1.0 - (epoch - 1) / self.epochs) ** 0.9


@dataclass(frozen=True)
class Checkpoint:
    epoch: int
    classifier: VoxelClassifier
    val_dice: float

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "w": [float(v) for v in self.classifier.w],
            "b": self.classifier.b,
            "val_dice": self.val_dice,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Checkpoint":
        return cls(int(d["epoch"]), VoxelClassifier(np.asarray(d["w"], dtype=np.float64), float(d["b"])), float(d["val_dice"]))


class TrainResult(NamedTuple):
    checkpoints: list[Checkpoint]
    best: Checkpoint


@dataclass(frozen=True, eq=False)
class ProbabilityVolume:
    probs: np.ndarray
    spacing: Spacing

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(n) for n in self.probs.shape)


def predict_probs(clf: VoxelClassifier, fv: FeatureVolume, spacing=(1.0, 1.0, 1.0)) -> ProbabilityVolume:
    if clf.n_features != fv.n_features:
        raise VolumeError(f"classifier expects F={clf.n_features}, features have F={fv.n_features}")
    z = np.tensordot(clf.w, fv.features, axes=(0, 0)) + clf.b
    return ProbabilityVolume(expit(z), Spacing.of(spacing))


def binarize(probs, threshold: float = 0.5) -> BinaryMask:
    """Vessel iff probability is strictly above ``threshold``."""
    if not 0 < threshold < 1:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    return BinaryMask(probs.probs > threshold, probs.spacing)


def _arrays(probs, labels) -> tuple[np.ndarray, np.ndarray]:
    p = probs.probs if isinstance(probs, ProbabilityVolume) else np.asarray(probs, dtype=np.float64)
    y = labels.bits if isinstance(labels, BinaryMask) else np.asarray(labels)
    if p.shape != y.shape:
        raise VolumeError(f"dims mismatch: {p.shape} vs {y.shape}")
    return p, y.astype(np.float64)


def hra_ce_loss(probs, labels, T: float = 0.1):
    """Mean cross-entropy over voxels with ``|y - p| > T``.

    Returns ``(loss, selected, count)``; ``selected`` is a :class:`BinaryMask`
    when ``probs`` is a :class:`ProbabilityVolume`, else a boolean array.
    """
    if not 0 <= T < 1:
        raise ValueError(f"T must lie in [0, 1), got {T}")
    p, y = _arrays(probs, labels)
    sel = np.abs(y - p) > T
    count = int(np.count_nonzero(sel))
    pc = np.clip(p[sel], EPS, 1 - EPS)
    ys = y[sel]
    total = -(ys * np.log(pc) + (1 - ys) * np.log1p(-pc)).sum()
    loss = float(total / max(count, 1))
    if isinstance(probs, ProbabilityVolume):
        sel = BinaryMask(sel, probs.spacing)
    return loss, sel, count


def _hra_grad(x: np.ndarray, y: np.ndarray, w: np.ndarray, b: float, T: float):
    p = expit(x @ w + b)
    sel = np.abs(y - p) > T
    count = int(np.count_nonzero(sel))
    if count == 0:
        return np.zeros_like(w), 0.0, 0.0, 0
    r = p[sel] - y[sel]
    gw = x[sel].T @ r / count
    gb = float(r.sum() / count)
    pc = np.clip(p[sel], EPS, 1 - EPS)
    ys = y[sel]
    loss = float(-(ys * np.log(pc) + (1 - ys) * np.log1p(-pc)).sum() / count)
    return gw, gb, loss, count


def hra_ce_gradient(clf: VoxelClassifier, features, labels, T: float = 0.1, voxel_subset=None):
    """Gradient ``(dL/dw, dL/db)`` of the selected-voxel mean CE, gate held fixed.

    ``features`` is a :class:`FeatureVolume` or an ``(n, F)`` matrix;
    ``voxel_subset`` optionally restricts evaluation to flat voxel indices.
    """
    if isinstance(features, FeatureVolume):
        x = features.matrix()
    else:
        x = np.asarray(features, dtype=np.float64)
    y = labels.bits.ravel() if isinstance(labels, BinaryMask) else np.asarray(labels).ravel()
    if x.shape[0] != y.size or x.shape[1] != clf.n_features:
        raise VolumeError(f"feature matrix {x.shape} incompatible with {y.size} labels / F={clf.n_features}")
    if voxel_subset is not None:
        idx = np.asarray(voxel_subset)
        x, y = x[idx], y[idx]
    gw, gb, _, _ = _hra_grad(x, y.astype(np.float64), clf.w, clf.b, T)
    return gw, gb


# --------------------------------------------------------------------------
# training


@dataclass(frozen=True, eq=False)
class VoxelPool:
    """Stratified voxel samples drawn from the training scans."""

    x: np.ndarray  # (n, F)
    y: np.ndarray  # (n,) float64 in {0, 1}

    @property
    def positives(self) -> np.ndarray:
        return np.flatnonzero(self.y > 0.5)

    @property
    def negatives(self) -> np.ndarray:
        return np.flatnonzero(self.y <= 0.5)


def _stratified(fv: FeatureVolume, mask: BinaryMask, n: int, rng: np.random.Generator):
    y = mask.bits.ravel()
    pos = np.flatnonzero(y)
    neg = np.flatnonzero(~y)
    n_pos = min(pos.size, n // 2)
    n_neg = min(neg.size, n - n_pos)
    if n_neg < n - n_pos:
        n_pos = min(pos.size, n - n_neg)
    idx = np.concatenate([
        np.sort(rng.choice(pos, size=n_pos, replace=False)) if n_pos else np.zeros(0, dtype=np.int64),
        np.sort(rng.choice(neg, size=n_neg, replace=False)) if n_neg else np.zeros(0, dtype=np.int64),
    ])
    x = fv.matrix()[idx]
    return np.ascontiguousarray(x), y[idx].astype(np.float64)


def build_pool(scans: Iterable[tuple[FeatureVolume, BinaryMask]], samples_per_scan: int, seed: int) -> VoxelPool:
    """Draw up to ``samples_per_scan`` voxels per scan, half vessel and half background where available."""
    rng = np.random.default_rng(seed)
    xs, ys = [], []
    for fv, mask in scans:
        if fv.dims != mask.dims:
            raise VolumeError(f"features {fv.dims} and mask {mask.dims} disagree")
        x, y = _stratified(fv, mask, samples_per_scan, rng)
        xs.append(x)
        ys.append(y)
    if not xs:
        raise TrainingError("empty training set")
    return VoxelPool(np.concatenate(xs), np.concatenate(ys))


def validation_dice(clf: VoxelClassifier, val: Sequence[tuple[FeatureVolume, BinaryMask]], threshold: float = 0.5) -> float:
    scores = []
    for fv, mask in val:
        pred = binarize(predict_probs(clf, fv, mask.spacing), threshold)
        scores.append(dsc(confusion(pred, mask)))
    return float(np.mean(scores))


def train(train_scans, val_scans: Sequence[tuple[FeatureVolume, BinaryMask]], config: TrainConfig) -> TrainResult:
    """Momentum SGD from zero weights on balanced voxel minibatches.

    The step size follows ``config.lr_schedule`` (polynomial decay by default).

    ``train_scans`` is an iterable of ``(FeatureVolume, BinaryMask)`` pairs or a
    prebuilt :class:`VoxelPool`. A checkpoint is kept every
    ``checkpoint_every`` epochs and scored by mean validation Dice; ``best``
    is the highest-scoring one, earliest on ties.
    """
    if not val_scans:
        raise TrainingError("empty validation set")
    pool = train_scans if isinstance(train_scans, VoxelPool) else build_pool(train_scans, config.samples_per_scan, config.seed)
    if pool.y.size == 0:
        raise TrainingError("empty training set")
    n_feat = pool.x.shape[1]
    if any(fv.n_features != n_feat for fv, _ in val_scans):
        raise VolumeError("validation features disagree with training features")

    rng = np.random.default_rng([config.seed, 1])
    pos, neg = pool.positives, pool.negatives
    half = config.batch_size // 2
    if pos.size == 0:
        n_pos, n_neg = 0, config.batch_size
    elif neg.size == 0:
        n_pos, n_neg = config.batch_size, 0
    else:
        n_pos, n_neg = half, config.batch_size - half

    w = np.zeros(n_feat)
    b = 0.0
    vw = np.zeros(n_feat)
    vb = 0.0
    checkpoints: list[Checkpoint] = []
    for epoch in range(1, config.epochs + 1):
        lr = config.lr_at(epoch)
        for _ in range(config.steps_per_epoch):
            idx = np.concatenate([
                pos[rng.integers(pos.size, size=n_pos)] if n_pos else np.zeros(0, dtype=np.int64),
                neg[rng.integers(neg.size, size=n_neg)] if n_neg else np.zeros(0, dtype=np.int64),
            ])
            gw, gb, loss, _ = _hra_grad(pool.x[idx], pool.y[idx], w, b, config.hra_threshold)
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}")
            vw = config.momentum * vw - lr * (gw + config.weight_decay * w)
            vb = config.momentum * vb - lr * (gb + config.weight_decay * b)
            w = w + vw
            b = b + vb
        if not (np.all(np.isfinite(w)) and math.isfinite(b)):
            raise TrainingError(f"non-finite parameters at epoch {epoch}")
        if epoch % config.checkpoint_every == 0:
            clf = VoxelClassifier(w.copy(), b)
            vd = validation_dice(clf, val_scans, config.binarize_threshold)
            checkpoints.append(Checkpoint(epoch, clf, vd))
            log.debug("epoch %d loss %.5f val dice %.4f", epoch, loss, vd)
    if not checkpoints:
        clf = VoxelClassifier(w.copy(), b)
        checkpoints.append(Checkpoint(config.epochs, clf, validation_dice(clf, val_scans, config.binarize_threshold)))
    best = checkpoints[0]
    for ck in checkpoints[1:]:
        if ck.val_dice > best.val_dice:
            best = ck
    return TrainResult(checkpoints, best)


def save_checkpoint(ck: Checkpoint, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(ck.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def load_checkpoint(path) -> Checkpoint:
    return Checkpoint.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def config_dict(config: TrainConfig) -> dict:
    return asdict(config)
