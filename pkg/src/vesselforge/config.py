"""Pipeline configuration: one JSON document holding every hyperparameter.

Unknown keys and wrongly-typed values are rejected with the dotted path of the
offending field, so a typo never silently falls back to a default.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .augment import AugmentationSpec
from .features import FeatureConfig
from .model import TrainConfig

__all__ = [
    "ConfigError",
    "SelectionRule",
    "SelectionPolicy",
    "PipelineConfig",
    "load_config",
    "config_hash",
    "DEFAULT_SELECTION",
]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SelectionRule:
    """Keep candidates whose mean precision (and optionally mean Dice) strictly exceed the thresholds."""

    min_mean_precision: float | None = None
    min_mean_dice: float | None = None
    cap: int = 40

    def __post_init__(self):
        for name in ("min_mean_precision", "min_mean_dice"):
            v = getattr(self, name)
            if v is not None and not 0 <= v <= 1:
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")
        if self.cap < 0:
            raise ConfigError(f"cap must be >= 0, got {self.cap}")

    def admits(self, mean_precision: float, mean_dice: float) -> bool:
        if self.min_mean_precision is not None and not mean_precision > self.min_mean_precision:
            return False
        if self.min_mean_dice is not None and not mean_dice > self.min_mean_dice:
            return False
        return True


@dataclass(frozen=True)
class SelectionPolicy:
    rules: tuple[SelectionRule, ...]
    ranking: str = "stability"

    def rule(self, iteration: int) -> SelectionRule:
        if not 1 <= iteration <= len(self.rules):
            raise ConfigError(f"iteration {iteration} outside policy with {len(self.rules)} rules")
        return self.rules[iteration - 1]


DEFAULT_SELECTION = SelectionPolicy(
    (SelectionRule(min_mean_precision=0.9, cap=40), SelectionRule(min_mean_precision=0.95, min_mean_dice=0.85, cap=40))
)


@dataclass(frozen=True)
class PipelineConfig:
    dataset: str | None = None
    out: str | None = None
    seed: int = 0
    train: TrainConfig = field(default_factory=TrainConfig)
    augment: AugmentationSpec = field(default_factory=AugmentationSpec)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    selection: SelectionPolicy = DEFAULT_SELECTION
    k_checkpoints: int = 5
    augment_copies: int = 2
    final_retrain: bool = True
    spur_prune_mm: float = 0.0
    jobs: int = 1
    base_dir: str | None = None  # directory relative paths resolve against

    def __post_init__(self):
        if self.k_checkpoints < 2:
            raise ConfigError("k_checkpoints must be >= 2")
        if self.augment_copies < 0:
            raise ConfigError("augment_copies must be >= 0")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")

    @property
    def iterations(self) -> int:
        return len(self.selection.rules)

    def resolve(self, path: str | None) -> Path | None:
        if path is None:
            return None
        p = Path(path)
        if not p.is_absolute() and self.base_dir is not None:
            p = Path(self.base_dir) / p
        return p

    def with_seed(self, seed: int) -> "PipelineConfig":
        """Route one seed into every randomised component."""
        return dataclasses.replace(
            self,
            seed=seed,
            train=dataclasses.replace(self.train, seed=seed),
            augment=dataclasses.replace(self.augment, seed=seed),
            features=dataclasses.replace(self.features, seed=seed),
        )

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "out": self.out,
            "seed": self.seed,
            "train": dataclasses.asdict(self.train),
            "augment": self.augment.to_dict(),
            "features": dataclasses.asdict(self.features),
            "selection": [dataclasses.asdict(r) for r in self.selection.rules],
            "k_checkpoints": self.k_checkpoints,
            "augment_copies": self.augment_copies,
            "final_retrain": self.final_retrain,
            "spur_prune_mm": self.spur_prune_mm,
            "jobs": self.jobs,
        }


def _typed(cls, data: Any, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object, got {type(data).__name__}")
    known = {f.name: f for f in dataclasses.fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigError(f"{where}.{key}: unknown field")
    kwargs = {}
    for key, value in data.items():
        default = getattr(cls(), key) if _has_defaults(cls) else None
        if isinstance(default, bool) and not isinstance(value, bool):
            raise ConfigError(f"{where}.{key}: expected a boolean, got {value!r}")
        if isinstance(default, int) and not isinstance(default, bool):
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"{where}.{key}: expected an integer, got {value!r}")
        if isinstance(default, float) and (isinstance(value, bool) or not isinstance(value, (int, float))):
            raise ConfigError(f"{where}.{key}: expected a number, got {value!r}")
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _has_defaults(cls) -> bool:
    try:
        cls()
        return True
    except TypeError:
        return False


def _selection(data: Any) -> SelectionPolicy:
    if not isinstance(data, list):
        raise ConfigError("selection: expected a list of per-iteration rules")
    rules = tuple(_typed(SelectionRule, r, f"selection[{i}]") for i, r in enumerate(data))
    return SelectionPolicy(rules)


def config_from_dict(data: dict, base_dir: str | None = None) -> PipelineConfig:
    if not isinstance(data, dict):
        raise ConfigError("config: expected a JSON object")
    allowed = {f.name for f in dataclasses.fields(PipelineConfig)} - {"base_dir"}
    for key in data:
        if key not in allowed:
            raise ConfigError(f"config.{key}: unknown field")
    kw: dict[str, Any] = {}
    if "train" in data:
        kw["train"] = _typed(TrainConfig, data["train"], "config.train")
    if "features" in data:
        kw["features"] = _typed(FeatureConfig, data["features"], "config.features")
    if "augment" in data:
        aug = data["augment"]
        if not isinstance(aug, dict):
            raise ConfigError("config.augment: expected an object")
        known = {f.name for f in dataclasses.fields(AugmentationSpec)}
        for key in aug:
            if key not in known:
                raise ConfigError(f"config.augment.{key}: unknown field")
        try:
            kw["augment"] = AugmentationSpec.from_dict(aug)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"config.augment: {exc}") from None
    if "selection" in data:
        kw["selection"] = _selection(data["selection"])
    for key, typ in (("dataset", str), ("out", str)):
        if key in data and data[key] is not None:
            if not isinstance(data[key], str):
                raise ConfigError(f"config.{key}: expected a string path")
            kw[key] = data[key]
    for key in ("seed", "k_checkpoints", "augment_copies", "jobs"):
        if key in data:
            if isinstance(data[key], bool) or not isinstance(data[key], int):
                raise ConfigError(f"config.{key}: expected an integer, got {data[key]!r}")
            kw[key] = data[key]
    if "final_retrain" in data:
        if not isinstance(data["final_retrain"], bool):
            raise ConfigError("config.final_retrain: expected a boolean")
        kw["final_retrain"] = data["final_retrain"]
    if "spur_prune_mm" in data:
        if isinstance(data["spur_prune_mm"], bool) or not isinstance(data["spur_prune_mm"], (int, float)):
            raise ConfigError("config.spur_prune_mm: expected a number")
        kw["spur_prune_mm"] = float(data["spur_prune_mm"])
    try:
        cfg = PipelineConfig(base_dir=base_dir, **kw)
    except ValueError as exc:
        raise ConfigError(f"config: {exc}") from None
    # one seed drives every component unless a section pins its own
    seed = cfg.seed
    return dataclasses.replace(
        cfg,
        train=cfg.train if "seed" in data.get("train", {}) else dataclasses.replace(cfg.train, seed=seed),
        augment=cfg.augment if "seed" in data.get("augment", {}) else dataclasses.replace(cfg.augment, seed=seed),
        features=cfg.features if "seed" in data.get("features", {}) else dataclasses.replace(cfg.features, seed=seed),
    )


def load_config(path) -> PipelineConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return config_from_dict(data, base_dir=str(path.parent.resolve()))


def config_hash(cfg: PipelineConfig) -> str:
    blob = json.dumps(cfg.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()
