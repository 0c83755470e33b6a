"""Batch command-line front end.

Every subcommand writes its outputs plus ``manifest.json`` (effective-config
hash, seed, sha256 of every input and output file) and ``config.json`` (the
effective configuration after defaulting). Exit status is 0 on success, 1 on
invalid input (bad flags, config or files) and 2 on runtime failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import os
import shutil
import sys
from importlib import metadata
from pathlib import Path

import numpy as np

from . import morphometry, phantom, selftrain, stats
from .config import ConfigError, PipelineConfig, config_from_dict, config_hash, load_config
from .features import FeatureExtractor
from .metrics import MetricError, score_masks, write_metrics_csv
from .model import Checkpoint, TrainingError, binarize, load_checkpoint, predict_probs, save_checkpoint
from .volume import (
    AnnotationError,
    BinaryMask,
    Spacing,
    VolumeError,
    VolumeGrid,
    load_mask,
    load_vessel12_points,
    load_volume,
    points_to_mask,
    save_volume,
    volume_paths,
)

log = logging.getLogger("vesselforge")

LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


# --------------------------------------------------------------------------
# manifest helpers


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _volume_files(path) -> list[Path]:
    return list(volume_paths(path))


def _version() -> str:
    try:
        return metadata.version("vesselforge")
    except metadata.PackageNotFoundError:  # pragma: no cover - source checkout
        return "0+unknown"


class Run:
    """Collects inputs for one invocation and writes the manifest at the end."""

    def __init__(self, command: str, out: Path, effective: dict, seed: int | None):
        self.command = command
        self.out = out
        self.effective = effective
        self.seed = seed
        self.inputs: dict[str, str] = {}
        out.mkdir(parents=True, exist_ok=True)

    def add_input(self, *paths):
        for p in paths:
            p = Path(p)
            self.inputs[str(p)] = _sha256(p)

    def add_volume_input(self, path):
        self.add_input(*_volume_files(path))

    def finish(self) -> Path:
        blob = json.dumps(self.effective, indent=2, sort_keys=True) + "\n"
        (self.out / "config.json").write_text(blob, encoding="utf-8")
        outputs = {}
        for p in sorted(self.out.rglob("*")):
            if p.is_file() and p.name != "manifest.json":
                outputs[p.relative_to(self.out).as_posix()] = _sha256(p)
        manifest = {
            "command": self.command,
            "version": _version(),
            "config_sha256": hashlib.sha256(json.dumps(self.effective, sort_keys=True).encode()).hexdigest(),
            "seed": self.seed,
            "inputs": dict(sorted(self.inputs.items())),
            "outputs": outputs,
        }
        path = self.out / "manifest.json"
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path


def _pipeline_config(args) -> PipelineConfig:
    if args.config is None:
        raise ConfigError("--config is required")
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_seed(args.seed)
    if getattr(args, "jobs", None) is not None:
        cfg = dataclasses.replace(cfg, jobs=args.jobs)
    if getattr(args, "dataset", None) is not None:
        cfg = dataclasses.replace(cfg, dataset=str(Path(args.dataset).resolve()), base_dir=None)
    return cfg


def _out(args, cfg: PipelineConfig | None = None) -> Path:
    out = args.out
    if out is None and cfg is not None and cfg.out is not None:
        out = cfg.resolve(cfg.out)
    if out is None:
        raise ConfigError("--out is required")
    return Path(out)


def _dataset(cfg: PipelineConfig, run: Run) -> selftrain.Corpus:
    if cfg.dataset is None:
        raise ConfigError("config.dataset: a dataset manifest is required")
    path = cfg.resolve(cfg.dataset)
    corpus = selftrain.load_corpus(path)
    run.add_input(path)
    base = path.parent
    data = json.loads(path.read_text(encoding="utf-8"))
    for split in ("labeled", "unlabeled", "val", "test"):
        for e in data.get(split, []):
            run.add_volume_input(base / e["image"])
            if e.get("mask"):
                run.add_volume_input(base / e["mask"])
    return corpus


# --------------------------------------------------------------------------
# model directories


def _write_model(out: Path, extractor: FeatureExtractor, result) -> None:
    out.mkdir(parents=True, exist_ok=True)
    extractor.save(out / "extractor.json")
    names = []
    for ck in result.checkpoints:
        name = f"checkpoints/epoch_{ck.epoch:04d}.json"
        save_checkpoint(ck, out / name)
        names.append(name)
    save_checkpoint(result.best, out / "best.json")
    info = {"checkpoints": names, "best": f"checkpoints/epoch_{result.best.epoch:04d}.json", "best_epoch": result.best.epoch}
    (out / "train.json").write_text(json.dumps(info, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _read_model(model_dir: Path, run: Run):
    info_path = model_dir / "train.json"
    if not info_path.is_file():
        raise VolumeError(f"{model_dir} is not a model directory (no train.json)")
    info = json.loads(info_path.read_text(encoding="utf-8"))
    run.add_input(info_path, model_dir / "extractor.json", model_dir / "best.json")
    checkpoints = []
    for name in info["checkpoints"]:
        run.add_input(model_dir / name)
        checkpoints.append(load_checkpoint(model_dir / name))
    extractor = FeatureExtractor.load(model_dir / "extractor.json")
    best = load_checkpoint(model_dir / "best.json")
    return extractor, checkpoints, best


def _copy_volume(src, dst_header: Path):
    dst_header.parent.mkdir(parents=True, exist_ok=True)
    for s, d in zip(volume_paths(src), volume_paths(dst_header)):
        shutil.copyfile(s, d)


# --------------------------------------------------------------------------
# subcommands


def cmd_phantom(args) -> int:
    spec_path = Path(args.spec)
    if not spec_path.is_file():
        raise ConfigError(f"--spec {spec_path} does not exist")
    try:
        raw = json.loads(spec_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{spec_path}: invalid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{spec_path}: expected a JSON object")
    raw = dict(raw)
    kind = raw.pop("kind", "tree")
    count = raw.pop("count", 1)
    if args.seed is not None:
        raw["seed"] = args.seed
    out = Path(args.out)
    try:
        if kind == "tree":
            spec = phantom.PhantomSpec(**raw)
        elif kind == "corpus":
            spec = phantom.CorpusSpec.from_dict(raw)
        elif kind == "tube":
            spec = None
        else:
            raise ConfigError(f"spec.kind: unknown phantom kind {kind!r}")
    except TypeError as exc:
        raise ConfigError(f"spec: {exc}") from None
    effective = {"kind": kind, "count": count, **(spec.to_dict() if spec is not None else raw)}
    run = Run("phantom", out, effective, effective.get("seed"))
    run.add_input(spec_path)

    def emit(name, grid, mask, truth):
        save_volume(mask, out / f"{name}.vvol.json")
        save_volume(grid, out / f"{name}_ct.vvol.json")
        (out / f"{name}.truth.json").write_text(json.dumps(truth, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    if kind == "tree":
        for i in range(int(count)):
            grid, mask, truth = phantom.generate_tree_phantom(dataclasses.replace(spec, seed=spec.seed + i))
            emit(f"tree{i}", grid, mask, truth)
    elif kind == "tube":
        try:
            grid, mask, record = phantom.generate_tube_phantom(**raw)
        except TypeError as exc:
            raise ConfigError(f"spec: {exc}") from None
        record["kind"] = "tube"
        emit("tube0", grid, mask, record)
    else:
        manifest = {s: [] for s in phantom.SPLITS}
        for split, sid, grid, mask, truth in phantom.generate_corpus(spec):
            emit(sid, grid, mask, truth)
            entry = {"id": sid, "image": f"{sid}_ct.vvol.json"}
            if split != "unlabeled":
                entry["mask"] = f"{sid}.vvol.json"
            manifest[split].append(entry)
        (out / "dataset.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    run.finish()
    return 0


def _pseudo_items(selection_path: Path, corpus: selftrain.Corpus, run: Run):
    sel = json.loads(selection_path.read_text(encoding="utf-8"))
    run.add_input(selection_path)
    by_id = {s.id: s for s in corpus.unlabeled}
    items = []
    for e in sel.get("pseudo_labels", []):
        if e["id"] not in by_id:
            raise VolumeError(f"pseudo label {e['id']} is not an unlabeled scan of the dataset")
        mpath = selection_path.parent / e["mask"]
        run.add_volume_input(mpath)
        items.append((by_id[e["id"]], load_mask(mpath)))
    return items


def cmd_train(args) -> int:
    cfg = _pipeline_config(args)
    out = _out(args, cfg)
    run = Run("train", out, cfg.to_dict(), cfg.seed)
    corpus = _dataset(cfg, run)
    if args.features:
        run.add_input(args.features)
        extractor = FeatureExtractor.load(args.features)
    else:
        extractor = FeatureExtractor(cfg.features).fit([s.image for s in sorted(corpus.labeled, key=lambda s: s.id)])
    pseudo = _pseudo_items(Path(args.pseudo), corpus, run) if args.pseudo else []
    val = [(extractor.transform(s.image), s.mask) for s in sorted(corpus.val, key=lambda s: s.id)]
    result = selftrain.train_stage(extractor, corpus.labeled, pseudo, val, cfg)
    _write_model(out, extractor, result)
    run.finish()
    log.info("trained: best epoch %d, val dice %.4f", result.best.epoch, result.best.val_dice)
    return 0


def cmd_pseudolabel(args) -> int:
    cfg = _pipeline_config(args)
    out = _out(args, cfg)
    run = Run("pseudolabel", out, cfg.to_dict(), cfg.seed)
    corpus = _dataset(cfg, run)
    extractor, checkpoints, best = _read_model(Path(args.model), run)
    scans = {s.id: s for s in corpus.unlabeled}
    if args.selection:
        run.add_input(args.selection)
        prev = json.loads(Path(args.selection).read_text(encoding="utf-8"))
        ids = prev["remainder"]
    else:
        ids = sorted(scans)
    cands = selftrain.generate_candidates(
        checkpoints[-cfg.k_checkpoints :],
        best,
        [(i, scans[i].image) for i in ids],
        extractor,
        cfg.train.binarize_threshold,
        cfg.jobs,
    )
    selftrain.write_candidates_csv(cands, out / "candidates.csv")
    for c in cands:
        save_volume(c.reference, out / "pseudo" / f"{c.scan_id}.vvol.json")
    run.finish()
    return 0


def cmd_select(args) -> int:
    cfg = _pipeline_config(args)
    out = _out(args, cfg)
    run = Run("select", out, {**cfg.to_dict(), "iteration": args.iteration, "all": args.all}, cfg.seed)
    cdir = Path(args.candidates)
    csv_path = cdir / "candidates.csv"
    if not csv_path.is_file():
        raise VolumeError(f"{cdir} has no candidates.csv")
    run.add_input(csv_path)
    rows = selftrain.read_candidates_csv(csv_path)
    cands = [
        selftrain.PseudoLabelCandidate(r["scan_id"], (), None, r["stability"], r["mean_precision"], r["mean_dice"])
        for r in rows
    ]
    if args.all:
        # final retrain: every remaining candidate is pseudo-labeled
        u1, u2 = tuple(sorted(c.scan_id for c in cands)), ()
    elif args.iteration is None:
        raise ConfigError("select needs --iteration or --all")
    else:
        try:
            u1, u2 = selftrain.select_reliable(cands, cfg.selection, args.iteration)
        except ConfigError as exc:
            raise ConfigError(f"--iteration: {exc}") from None
    pseudo = []
    if args.previous:
        prev_path = Path(args.previous)
        run.add_input(prev_path)
        prev = json.loads(prev_path.read_text(encoding="utf-8"))
        for e in prev.get("pseudo_labels", []):
            src = prev_path.parent / e["mask"]
            run.add_volume_input(src)
            _copy_volume(src, out / "pseudo" / f"{e['id']}.vvol.json")
            pseudo.append(e["id"])
    for sid in u1:
        src = cdir / "pseudo" / f"{sid}.vvol.json"
        run.add_volume_input(src)
        _copy_volume(src, out / "pseudo" / f"{sid}.vvol.json")
        pseudo.append(sid)
    selftrain.write_candidates_csv(cands, out / "candidates.csv", u1)
    doc = {
        "iteration": args.iteration,
        "selected": list(u1),
        "remainder": list(u2),
        "pseudo_labels": [{"id": i, "mask": f"pseudo/{i}.vvol.json"} for i in sorted(pseudo)],
    }
    (out / "selection.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    run.finish()
    return 0


def cmd_pipeline(args) -> int:
    cfg = _pipeline_config(args)
    out = _out(args, cfg)
    run = Run("pipeline", out, cfg.to_dict(), cfg.seed)
    corpus = _dataset(cfg, run)

    def save_stage(name, extractor, result):
        _write_model(out / "stages" / name, extractor, result)

    final, report = selftrain.run_pipeline(cfg, corpus, on_stage=save_stage)
    report.write(out)
    report.extractor.save(out / "extractor.json")
    save_checkpoint(final, out / "final.json")
    for st in report.stages:
        if st.candidates:
            selftrain.write_candidates_csv(
                [
                    selftrain.PseudoLabelCandidate(c["scan_id"], (), None, c["stability"], c["mean_precision"], c["mean_dice"])
                    for c in st.candidates
                ],
                out / f"candidates_{st.name}.csv",
                [c["scan_id"] for c in st.candidates if c["selected"]],
            )
    run.finish()
    for st in report.stages:
        m = st.metrics
        print(f"{st.name}: dsc={m['dsc']:.4f} iou={m['iou']:.4f} sensitivity={m['sensitivity']:.4f} precision={m['precision']:.4f} selected={len(st.split.selected)}")
    return 0


def _scan_id(path) -> str:
    name = Path(path).name
    for suffix in (".vvol.json", ".json"):
        if name.endswith(suffix):
            return name[: -len(suffix)]
    return name


def cmd_evaluate(args) -> int:
    if args.pred or args.gt:
        if not (args.pred and args.gt) or len(args.pred) != len(args.gt):
            raise ConfigError("--pred and --gt must be given together, the same number of times")
        out = Path(args.out) if args.out else None
        if out is None:
            raise ConfigError("--out is required")
        effective = {"pred": list(args.pred), "gt": list(args.gt)}
        run = Run("evaluate", out, effective, None)
        rows = []
        for p, g in zip(args.pred, args.gt):
            run.add_volume_input(p)
            run.add_volume_input(g)
            rows.append((_scan_id(p), score_masks(load_mask(p), load_mask(g))))
    else:
        cfg = _pipeline_config(args)
        out = _out(args, cfg)
        if not args.model:
            raise ConfigError("evaluate needs --pred/--gt or --model")
        run = Run("evaluate", out, cfg.to_dict(), cfg.seed)
        corpus = _dataset(cfg, run)
        model = Path(args.model)
        if model.is_dir():
            extractor, _, best = _read_model(model, run)
        else:
            raise ConfigError("--model must be a model directory written by train or pipeline")
        rows = selftrain.evaluate_model(extractor, best, corpus.test, cfg.train.binarize_threshold)
    write_metrics_csv(rows, out / "metrics.csv")
    run.finish()
    return 0


def cmd_morph(args) -> int:
    out = Path(args.out) if args.out else None
    if out is None:
        raise ConfigError("--out is required")
    prune = args.spur_prune_mm
    if prune is None and args.config:
        prune = load_config(args.config).spur_prune_mm
    prune = 0.0 if prune is None else prune
    if prune < 0:
        raise ConfigError("--spur-prune-mm must be >= 0")
    run = Run("morph", out, {"masks": list(args.mask), "spur_prune_mm": prune}, None)
    rows = []
    for m in args.mask:
        run.add_volume_input(m)
        mask = load_mask(m)
        rep, graph, vols = morphometry.analyze_mask(mask, spur_prune_mm=prune)
        sid = _scan_id(m)
        rows.append((sid, rep))
        morphometry.write_graph_csv(graph, vols, out / f"graph_{sid}.csv")
    morphometry.write_report_csv(rows, out / "morphometry.csv")
    run.finish()
    return 0


def cmd_stats(args) -> int:
    out = Path(args.out) if args.out else None
    if out is None:
        raise ConfigError("--out is required")
    groups: list[tuple[str, str]] = []
    for g in args.group:
        if "=" not in g:
            raise ConfigError(f"--group expects NAME=CSV, got {g!r}")
        name, path = g.split("=", 1)
        groups.append((name, path))
    if len(groups) < 2:
        raise ConfigError("stats needs at least two --group arguments")
    fields = [f for f in morphometry.REPORT_HEADER if f != "scan_id"]
    metrics = args.metrics.split(",") if args.metrics else fields
    for m in metrics:
        if m not in fields:
            raise ConfigError(f"--metrics: unknown report column {m!r}")
    run = Run("stats", out, {"groups": groups, "metrics": metrics, "always_posthoc": args.always_posthoc}, None)
    tables = {}
    for name, path in groups:
        run.add_input(path)
        tables[name] = morphometry.read_report_csv(path)
    rows = []
    for metric in metrics:
        samples = [stats.GroupSamples(name, tuple(float(r[metric]) for r in tables[name])) for name, _ in groups]
        rows.extend(stats.compare_groups(metric, samples, args.always_posthoc))
    stats.write_stats_csv(rows, out / "stats.csv")
    run.finish()
    return 0


def cmd_ingest(args) -> int:
    out = Path(args.out) if args.out else None
    if out is None:
        raise ConfigError("--out is required")
    if args.like:
        ref = load_volume(args.like)
        dims, spacing = ref.dims, ref.spacing.as_tuple()
    else:
        if not args.dims:
            raise ConfigError("ingest-vessel12 needs --like or --dims")
        try:
            dims = tuple(int(v) for v in args.dims.split(","))
            spacing = tuple(float(v) for v in args.spacing.split(",")) if args.spacing else (1.0, 1.0, 1.0)
        except ValueError:
            raise ConfigError("--dims/--spacing expect comma-separated numbers (z,y,x)") from None
        if len(dims) != 3 or len(spacing) != 3:
            raise ConfigError("--dims/--spacing need three values (z,y,x)")
    run = Run("ingest-vessel12", out, {"points": args.points, "dims": list(dims), "spacing": list(spacing)}, None)
    run.add_input(args.points)
    if args.like:
        run.add_volume_input(args.like)
    points = load_vessel12_points(args.points, dims, spacing)
    mask = points_to_mask(points, dims, spacing)
    save_volume(mask, out / f"{_scan_id(args.points).rsplit('.', 1)[0]}.vvol.json")
    run.finish()
    return 0


# --------------------------------------------------------------------------
# parser


def _common(p, config=True):
    if config:
        p.add_argument("--config", help="pipeline configuration JSON")
        p.add_argument("--seed", type=int, help="override the configuration seed")
        p.add_argument("--jobs", type=int, help="scan-level worker threads")
        p.add_argument("--dataset", help="dataset manifest, overriding config.dataset")
    p.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="vesselforge", description="Vessel segmentation self-training and morphometry")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("phantom", help="generate synthetic phantoms")
    p.add_argument("--spec", required=True, help="phantom spec JSON (kind: tree | tube | corpus)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("train", help="train a classifier on labeled (and pseudo-labeled) scans")
    _common(p)
    p.add_argument("--pseudo", help="selection.json whose pseudo labels join the training set")
    p.add_argument("--features", help="frozen extractor.json to reuse instead of fitting")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("pseudolabel", help="score unlabeled scans with a trained model")
    _common(p)
    p.add_argument("--model", required=True, help="model directory written by train")
    p.add_argument("--selection", help="previous selection.json; only its remainder is scored")
    p.set_defaults(func=cmd_pseudolabel)

    p = sub.add_parser("select", help="apply the selection policy to scored candidates")
    _common(p)
    p.add_argument("--candidates", required=True, help="directory written by pseudolabel")
    p.add_argument("--iteration", type=int, help="1-based iteration index into the policy")
    p.add_argument("--all", action="store_true", help="accept every candidate (the final retrain on the remainder)")
    p.add_argument("--previous", help="previous selection.json whose pseudo labels are carried forward")
    p.set_defaults(func=cmd_select)

    for name in ("pipeline", "iterate"):
        p = sub.add_parser(name, help="full self-training run")
        _common(p)
        p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("evaluate", help="metrics CSV for predictions or a model on the test split")
    _common(p)
    p.add_argument("--pred", action="append", help="predicted mask (repeatable)")
    p.add_argument("--gt", action="append", help="ground-truth mask (repeatable)")
    p.add_argument("--model", help="model directory")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("morph", help="morphometry report for masks")
    p.add_argument("--mask", action="append", required=True, help="mask header (repeatable)")
    p.add_argument("--spur-prune-mm", type=float, help="spur pruning length (0 = off)")
    p.add_argument("--config", help="pipeline configuration supplying spur_prune_mm")
    p.add_argument("--out")
    p.set_defaults(func=cmd_morph)

    p = sub.add_parser("stats", help="ANOVA and Bonferroni post-hoc over grouped report CSVs")
    p.add_argument("--group", action="append", required=True, help="NAME=report.csv (repeatable)")
    p.add_argument("--metrics", help="comma-separated report columns (default: all)")
    p.add_argument("--always-posthoc", action="store_true", help="run pairwise tests even without a significant ANOVA")
    p.add_argument("--out")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("ingest-vessel12", help="convert VESSEL12 point annotations to a mask")
    p.add_argument("--points", required=True, help="CSV of x,y,z,label rows")
    p.add_argument("--like", help="volume whose dims and spacing the mask adopts")
    p.add_argument("--dims", help="z,y,x grid size when --like is not given")
    p.add_argument("--spacing", help="z,y,x spacing in mm (default 1,1,1)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_ingest)
    return parser


def _setup_logging():
    level = os.environ.get("VESSELFORGE_LOG", "error").lower()
    if level not in LOG_LEVELS:
        raise ConfigError(f"VESSELFORGE_LOG must be one of {sorted(LOG_LEVELS)}, got {level!r}")
    logging.basicConfig(level=LOG_LEVELS[level], format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    logging.getLogger().setLevel(LOG_LEVELS[level])


def main(argv=None) -> int:
    parser = build_parser()
    try:
        _setup_logging()
        args = parser.parse_args(argv)
        if getattr(args, "jobs", None) is not None and args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        return args.func(args)
    except UsageError as exc:
        print(f"vesselforge: error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except (ConfigError, VolumeError, AnnotationError, stats.StatsError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"vesselforge: error: {exc}", file=sys.stderr)
        return 1
    except (TrainingError, MetricError) as exc:
        print(f"vesselforge: failed: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime error
        log.debug("unhandled failure", exc_info=True)
        print(f"vesselforge: failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
