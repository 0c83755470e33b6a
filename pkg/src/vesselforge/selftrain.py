"""Teacher-student self-training with checkpoint-stability pseudo-label selection.

A teacher is trained on the labeled scans and its last ``K`` checkpoints
predict every unlabeled scan. The stability score of scan ``i`` is

    s_i = sum_{j<K} IoU(M_ij, M_iK)

where ``M_iK`` is the final checkpoint's mask. The pseudo label is the mask of
the best checkpoint (highest validation Dice), and mean precision / mean Dice
of the checkpoint masks against it gate admission. Admitted scans are ranked
by ``s_i`` and capped; a freshly initialised student then trains on labeled
plus admitted scans, and becomes the next teacher.
"""
from __future__ import annotations

import csv
import json
import logging
import zlib
from dataclasses import dataclass, field
from multiprocessing.pool import ThreadPool
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .augment import AugmentationSpec, apply_strong, apply_weak
from .config import PipelineConfig, SelectionPolicy
from .features import FeatureExtractor, FeatureVolume
from .metrics import MetricError, confusion, dsc, iou, precision, score_masks, write_metrics_csv
from .model import (
    Checkpoint,
    TrainConfig,
    TrainingError,
    TrainResult,
    VoxelPool,
    binarize,
    predict_probs,
    train,
)
from .model import _stratified  # shared stratified sampler
from .volume import BinaryMask, VolumeError, VolumeGrid, load_mask, load_volume

__all__ = [
    "Scan",
    "Corpus",
    "DatasetSplit",
    "PseudoLabelCandidate",
    "StageReport",
    "PipelineReport",
    "stability_score",
    "mean_agreement",
    "generate_candidates",
    "select_reliable",
    "augment_scan",
    "build_training_pool",
    "train_stage",
    "evaluate_model",
    "run_pipeline",
    "load_corpus",
    "write_candidates_csv",
    "read_candidates_csv",
]

log = logging.getLogger(__name__)


# --------------------------------------------------------------------------
# data containers


@dataclass(frozen=True, eq=False)
class Scan:
    id: str
    image: VolumeGrid
    mask: BinaryMask | None = None

    def __post_init__(self):
        if self.mask is not None and self.mask.dims != self.image.dims:
            raise VolumeError(f"scan {self.id}: image {self.image.dims} and mask {self.mask.dims} disagree")


@dataclass(frozen=True, eq=False)
class Corpus:
    labeled: tuple[Scan, ...]
    unlabeled: tuple[Scan, ...]
    val: tuple[Scan, ...]
    test: tuple[Scan, ...]

    def __post_init__(self):
        for name in ("labeled", "unlabeled", "val", "test"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        ids = [s.id for s in self.labeled + self.unlabeled + self.val + self.test]
        if len(set(ids)) != len(ids):
            raise VolumeError("scan ids must be unique across splits")
        for name in ("labeled", "val", "test"):
            for s in getattr(self, name):
                if s.mask is None:
                    raise VolumeError(f"{name} scan {s.id} has no mask")


@dataclass(frozen=True)
class DatasetSplit:
    """Scan ids of D_l, D_u and the partition of D_u into selected and remainder."""

    labeled: tuple[str, ...]
    unlabeled: tuple[str, ...]
    selected: tuple[str, ...] = ()
    remainder: tuple[str, ...] | None = None

    def __post_init__(self):
        rem = tuple(sorted(set(self.unlabeled) - set(self.selected))) if self.remainder is None else tuple(self.remainder)
        object.__setattr__(self, "remainder", rem)
        if len(set(self.labeled) | set(self.unlabeled)) != len(self.labeled) + len(self.unlabeled):
            raise VolumeError("scan ids must be unique and D_l, D_u disjoint")
        u1, u2 = set(self.selected), set(rem)
        if u1 & u2 or (u1 | u2) != set(self.unlabeled) or len(u1) != len(self.selected) or len(u2) != len(rem):
            raise VolumeError("selected and remainder must partition the unlabeled set")


@dataclass(frozen=True, eq=False)
class PseudoLabelCandidate:
    scan_id: str
    masks: tuple[BinaryMask, ...]  # one per checkpoint, oldest first
    reference: BinaryMask  # best-checkpoint mask, used as the pseudo label
    stability: float
    mean_precision: float
    mean_dice: float

    @property
    def k(self) -> int:
        return len(self.masks)


# --------------------------------------------------------------------------
# scoring


def stability_score(masks: Sequence[BinaryMask]) -> float:
    """Sum of IoUs of the first ``K-1`` masks against the last one."""
    if len(masks) < 2:
        raise ValueError(f"stability score needs at least 2 checkpoint masks, got {len(masks)}")
    ref = masks[-1]
    return float(sum(iou(confusion(m, ref)) for m in masks[:-1]))


_AGREEMENT = {"precision": precision, "dice": dsc}


def mean_agreement(masks: Sequence[BinaryMask], reference: BinaryMask, metric: str, undefined: float | None = None) -> float:
    """Mean of ``metric(M_j, reference)`` over the checkpoint masks.

    Undefined metric values raise :class:`MetricError` unless ``undefined``
    supplies a substitute.
    """
    if metric not in _AGREEMENT:
        raise ValueError(f"metric must be 'precision' or 'dice', got {metric!r}")
    if len(masks) < 1:
        raise ValueError("mean agreement needs at least one mask")
    fn = _AGREEMENT[metric]
    vals = []
    for m in masks:
        try:
            vals.append(fn(confusion(m, reference)))
        except MetricError:
            if undefined is None:
                raise
            vals.append(float(undefined))
    return float(np.mean(vals))


def _candidate(scan_id, fv: FeatureVolume, checkpoints, best, spacing, threshold) -> PseudoLabelCandidate:
    masks = tuple(binarize(predict_probs(ck.classifier, fv, spacing), threshold) for ck in checkpoints)
    ref = binarize(predict_probs(best.classifier, fv, spacing), threshold)
    return PseudoLabelCandidate(
        scan_id,
        masks,
        ref,
        stability_score(masks),
        mean_agreement(masks, ref, "precision", undefined=0.0),
        mean_agreement(masks, ref, "dice", undefined=0.0),
    )


def generate_candidates(
    checkpoints: Sequence[Checkpoint],
    best: Checkpoint,
    unlabeled: Iterable[tuple[str, FeatureVolume | VolumeGrid]],
    extractor: FeatureExtractor | None = None,
    threshold: float = 0.5,
    jobs: int = 1,
) -> list[PseudoLabelCandidate]:
    """Score every unlabeled scan with the given checkpoints.

    Items of ``unlabeled`` carry either precomputed features or an image, in
    which case ``extractor`` computes the features on the fly. Results are in
    scan-id order whatever ``jobs`` is.
    """
    if len(checkpoints) < 2:
        raise ValueError("candidate generation needs at least 2 checkpoints")
    items = sorted(unlabeled, key=lambda t: t[0])

    def one(item):
        sid, data = item
        if isinstance(data, VolumeGrid):
            if extractor is None:
                raise ValueError("an extractor is needed to score raw images")
            fv, spacing = extractor.transform(data), data.spacing
        else:
            fv, spacing = data, (1.0, 1.0, 1.0)
        return _candidate(sid, fv, checkpoints, best, spacing, threshold)

    if jobs > 1 and len(items) > 1:
        with ThreadPool(jobs) as pool:
            return pool.map(one, items)
    return [one(it) for it in items]


def select_reliable(
    candidates: Sequence[PseudoLabelCandidate], policy: SelectionPolicy, iteration: int
) -> tuple[tuple[str, ...], tuple[str, ...]]:
    """Split candidate ids into ``(selected, remainder)``.

    Survivors of the iteration's thresholds are ranked by stability (ties by
    scan id) and at most ``cap`` are kept. Both outputs are sorted by scan id.
    """
    rule = policy.rule(iteration)
    passing = [c for c in candidates if rule.admits(c.mean_precision, c.mean_dice)]
    passing.sort(key=lambda c: (-c.stability, c.scan_id))
    chosen = {c.scan_id for c in passing[: rule.cap]}
    ids = sorted(c.scan_id for c in candidates)
    return tuple(i for i in ids if i in chosen), tuple(i for i in ids if i not in chosen)


CANDIDATE_HEADER = ("scan_id", "stability", "mean_precision", "mean_dice", "selected")


def write_candidates_csv(candidates: Sequence[PseudoLabelCandidate], path, selected: Iterable[str] = ()) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    sel = set(selected)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CANDIDATE_HEADER)
        for c in candidates:
            w.writerow([c.scan_id, repr(c.stability), repr(c.mean_precision), repr(c.mean_dice), int(c.scan_id in sel)])
    return path


def read_candidates_csv(path) -> list[dict]:
    """Rows as dicts with float scores; scores round-trip exactly."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out.append({
                "scan_id": row["scan_id"],
                "stability": float(row["stability"]),
                "mean_precision": float(row["mean_precision"]),
                "mean_dice": float(row["mean_dice"]),
            })
    return out


# --------------------------------------------------------------------------
# training stages


def draw_seed(scan_id: str, copy: int) -> int:
    return zlib.crc32(f"{scan_id}:{copy}".encode())


def augment_scan(scan_id: str, image: VolumeGrid, mask: BinaryMask, spec: AugmentationSpec, copies: int, strong: bool):
    """Augmented ``(image, mask)`` copies of one scan; weak always, strong on top when ``strong``.

    With ``copies == 0`` the scan is returned unchanged.
    """
    if copies == 0:
        return [(image, mask)]
    out = []
    for c in range(copies):
        ds = draw_seed(scan_id, c)
        g, m = apply_weak(image, mask, spec, ds)
        if strong:
            g, m = apply_strong(g, m, spec, ds)
        out.append((g, m))
    return out


def build_training_pool(
    extractor: FeatureExtractor,
    labeled: Sequence[Scan],
    pseudo: Sequence[tuple[Scan, BinaryMask]],
    spec: AugmentationSpec,
    copies: int,
    train_config: TrainConfig,
    jobs: int = 1,
) -> VoxelPool:
    """Stratified voxel pool from augmented labeled and pseudo-labeled scans.

    Labeled scans get weak augmentation; pseudo-labeled scans get strong on
    top of weak. Scans are visited in id order within each group so the pool
    does not depend on ``jobs``.
    """
    jobs_list = [(s.id, s.image, s.mask, False) for s in sorted(labeled, key=lambda s: s.id)]
    jobs_list += [(s.id, s.image, m, True) for s, m in sorted(pseudo, key=lambda t: t[0].id)]
    if not jobs_list:
        raise TrainingError("empty training set")

    def prep(item):
        sid, img, mask, strong = item
        return [(extractor.transform(g), m) for g, m in augment_scan(sid, img, mask, spec, copies, strong)]

    rng = np.random.default_rng(train_config.seed)
    xs, ys = [], []
    pool = ThreadPool(jobs) if jobs > 1 else None
    try:
        for start in range(0, len(jobs_list), max(jobs, 1)):
            chunk = jobs_list[start : start + max(jobs, 1)]
            prepared = pool.map(prep, chunk) if pool else [prep(c) for c in chunk]
            for pairs in prepared:
                for fv, m in pairs:
                    x, y = _stratified(fv, m, train_config.samples_per_scan, rng)
                    xs.append(x)
                    ys.append(y)
    finally:
        if pool:
            pool.close()
    return VoxelPool(np.concatenate(xs), np.concatenate(ys))


def train_stage(
    extractor: FeatureExtractor,
    labeled: Sequence[Scan],
    pseudo: Sequence[tuple[Scan, BinaryMask]],
    val: Sequence[tuple[FeatureVolume, BinaryMask]],
    config: PipelineConfig,
) -> TrainResult:
    """Train a freshly initialised classifier on labeled plus pseudo-labeled scans."""
    pool = build_training_pool(extractor, labeled, pseudo, config.augment, config.augment_copies, config.train, config.jobs)
    return train(pool, val, config.train)


def evaluate_model(
    extractor: FeatureExtractor, checkpoint: Checkpoint, scans: Sequence[Scan], threshold: float = 0.5
) -> list[tuple[str, dict]]:
    """Per-scan ``(scan_id, scores)`` on labeled scans, in scan-id order."""
    rows = []
    for s in sorted(scans, key=lambda s: s.id):
        pred = binarize(predict_probs(checkpoint.classifier, extractor.transform(s.image), s.image.spacing), threshold)
        rows.append((s.id, score_masks(pred, s.mask)))
    return rows


def mean_scores(rows: Sequence[tuple[str, dict]]) -> dict:
    keys = ("dsc", "iou", "sensitivity", "precision")
    return {k: float(np.nanmean([r[k] for _, r in rows])) if rows else float("nan") for k in keys}


# --------------------------------------------------------------------------
# report


@dataclass
class StageReport:
    name: str
    split: DatasetSplit
    best_epoch: int
    best_val_dice: float
    test_scores: list[tuple[str, dict]]
    candidates: list[dict] = field(default_factory=list)  # per-candidate scores for this stage's selection
    retrained: bool = True

    @property
    def metrics(self) -> dict:
        return mean_scores(self.test_scores)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "selected": list(self.split.selected),
            "remainder": list(self.split.remainder),
            "n_labeled": len(self.split.labeled),
            "n_selected": len(self.split.selected),
            "best_epoch": self.best_epoch,
            "best_val_dice": self.best_val_dice,
            "retrained": self.retrained,
            "candidates": self.candidates,
            "score_summary": _summary(self.candidates),
            "test_metrics": self.metrics,
        }


def _summary(cands: Sequence[dict]) -> dict:
    out = {}
    for key in ("stability", "mean_precision", "mean_dice"):
        v = np.array([c[key] for c in cands], dtype=np.float64)
        out[key] = (
            {"min": float(v.min()), "median": float(np.median(v)), "max": float(v.max())} if v.size else None
        )
    return out


@dataclass
class PipelineReport:
    stages: list[StageReport]
    selection: list[dict]
    seed: int
    extractor: FeatureExtractor | None = field(default=None, repr=False)  # frozen features of the run

    def stage(self, name: str) -> StageReport:
        for s in self.stages:
            if s.name == name:
                return s
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"seed": self.seed, "selection_policy": self.selection, "stages": [s.to_dict() for s in self.stages]}

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for s in self.stages:
            write_metrics_csv(s.test_scores, out / f"metrics_{s.name}.csv")
        path = out / "report.json"
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path


def _cand_rows(cands: Sequence[PseudoLabelCandidate], selected: Iterable[str]) -> list[dict]:
    sel = set(selected)
    return [
        {
            "scan_id": c.scan_id,
            "stability": c.stability,
            "mean_precision": c.mean_precision,
            "mean_dice": c.mean_dice,
            "selected": c.scan_id in sel,
        }
        for c in cands
    ]


# --------------------------------------------------------------------------
# driver


def run_pipeline(
    config: PipelineConfig,
    corpus: Corpus | None = None,
    on_stage: Callable[[str, FeatureExtractor, TrainResult], None] | None = None,
):
    """Full self-training run. Returns ``(final checkpoint, PipelineReport)``.

    ``corpus`` defaults to the dataset manifest named in the config.
    ``on_stage`` is called after each model is trained, e.g. to persist it.
    """
    if corpus is None:
        if config.dataset is None:
            raise ValueError("config.dataset is required when no corpus is supplied")
        corpus = load_corpus(config.resolve(config.dataset))
    for name in ("labeled", "val", "test"):
        if not getattr(corpus, name):
            raise ValueError(f"the {name} split is empty")
    thr = config.train.binarize_threshold
    K = config.k_checkpoints
    by_id = {s.id: s for s in corpus.unlabeled}

    extractor = FeatureExtractor(config.features).fit([s.image for s in sorted(corpus.labeled, key=lambda s: s.id)])
    val = [(extractor.transform(s.image), s.mask) for s in sorted(corpus.val, key=lambda s: s.id)]
    labeled_ids = tuple(sorted(s.id for s in corpus.labeled))
    unlabeled_ids = tuple(sorted(by_id))

    def fit(pseudo: dict[str, BinaryMask]) -> TrainResult:
        items = [(by_id[i], pseudo[i]) for i in sorted(pseudo)]
        return train_stage(extractor, corpus.labeled, items, val, config)

    def stage(name, result, split, cands=(), retrained=True):
        if on_stage is not None:
            on_stage(name, extractor, result)
        rep = StageReport(
            name,
            split,
            result.best.epoch,
            result.best.val_dice,
            evaluate_model(extractor, result.best, corpus.test, thr),
            list(cands),
            retrained,
        )
        log.info("%s: %s", name, {k: round(v, 4) for k, v in rep.metrics.items()})
        return rep

    log.info("training teacher on %d labeled scans", len(corpus.labeled))
    teacher = fit({})
    stages = [stage("baseline", teacher, DatasetSplit(labeled_ids, unlabeled_ids, (), unlabeled_ids))]

    pseudo: dict[str, BinaryMask] = {}
    remaining = unlabeled_ids
    for it in range(1, config.iterations + 1):
        cands = generate_candidates(
            teacher.checkpoints[-K:],
            teacher.best,
            [(i, by_id[i].image) for i in remaining],
            extractor,
            thr,
            config.jobs,
        )
        u1, u2 = select_reliable(cands, config.selection, it)
        for c in cands:
            if c.scan_id in u1:
                pseudo[c.scan_id] = c.reference
        remaining = u2
        split = DatasetSplit(labeled_ids, unlabeled_ids, tuple(sorted(pseudo)), remaining)
        log.info("iteration %d: selected %d of %d candidates", it, len(u1), len(cands))
        if u1:
            teacher = fit(pseudo)
        stages.append(stage(f"iteration_{it}", teacher, split, _cand_rows(cands, u1), retrained=bool(u1)))

    final = teacher
    retrained = False
    if config.final_retrain and remaining:
        for i in remaining:
            probs = predict_probs(teacher.best.classifier, extractor.transform(by_id[i].image), by_id[i].image.spacing)
            pseudo[i] = binarize(probs, thr)
        final = fit(pseudo)
        retrained = True
    split = DatasetSplit(labeled_ids, unlabeled_ids, tuple(sorted(pseudo)), () if retrained else remaining)
    stages.append(stage("final", final, split, retrained=retrained))
    policy = [
        {"min_mean_precision": r.min_mean_precision, "min_mean_dice": r.min_mean_dice, "cap": r.cap}
        for r in config.selection.rules
    ]
    return final.best, PipelineReport(stages, policy, config.seed, extractor)


# --------------------------------------------------------------------------
# dataset manifests


def _load_entry(entry: dict, base: Path, split: str, need_mask: bool) -> Scan:
    try:
        sid = entry["id"]
        image = load_volume(base / entry["image"])
    except KeyError as exc:
        raise VolumeError(f"{split} entry missing field {exc}") from None
    if not isinstance(image, VolumeGrid):
        raise VolumeError(f"{split} scan {sid}: image must be a float volume")
    mask = None
    if entry.get("mask") is not None:
        mask = load_mask(base / entry["mask"])
    elif need_mask:
        raise VolumeError(f"{split} scan {sid} needs a mask")
    return Scan(sid, image, mask)


def load_corpus(manifest) -> Corpus:
    """Read a dataset manifest: ``{split: [{"id", "image", "mask"?}, ...]}`` with paths relative to it."""
    manifest = Path(manifest)
    if not manifest.is_file():
        raise VolumeError(f"dataset manifest {manifest} does not exist")
    data = json.loads(manifest.read_text(encoding="utf-8"))
    base = manifest.parent
    parts = {}
    for split in ("labeled", "unlabeled", "val", "test"):
        entries = data.get(split, [])
        parts[split] = tuple(_load_entry(e, base, split, split != "unlabeled") for e in entries)
    return Corpus(**parts)
