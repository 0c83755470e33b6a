import json
from pathlib import Path

import pytest

from vesselforge.config import DEFAULT_SELECTION, ConfigError, config_from_dict, config_hash, load_config

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def test_paper_defaults_file():
    cfg = load_config(CONFIGS / "paper_defaults.json")
    r1, r2 = cfg.selection.rules
    assert (r1.min_mean_precision, r1.min_mean_dice, r1.cap) == (0.9, None, 40)
    assert (r2.min_mean_precision, r2.min_mean_dice, r2.cap) == (0.95, 0.85, 40)
    assert cfg.selection == DEFAULT_SELECTION
    assert cfg.train.lr == 0.01 and cfg.train.weight_decay == 3e-5 and cfg.train.epochs == 1000
    assert cfg.train.momentum == 0.99 and cfg.k_checkpoints == 5
    assert cfg.resolve(cfg.dataset).resolve() == (CONFIGS.parent / "runs/desk_corpus/dataset.json")


def test_every_shipped_pipeline_config_loads():
    for name in ("paper_defaults.json", "desk_pipeline.json"):
        cfg = load_config(CONFIGS / name)
        assert config_from_dict(cfg.to_dict()).to_dict() == cfg.to_dict()


def test_single_seed_reaches_every_component():
    cfg = config_from_dict({"seed": 7})
    assert cfg.train.seed == cfg.augment.seed == cfg.features.seed == 7
    pinned = config_from_dict({"seed": 7, "train": {"seed": 3}})
    assert pinned.train.seed == 3 and pinned.augment.seed == 7
    assert cfg.with_seed(2).features.seed == 2


@pytest.mark.parametrize(
    "doc, where",
    [
        ({"trian": {}}, "config.trian"),
        ({"train": {"epochs": "ten"}}, "config.train.epochs"),
        ({"train": {"lr": True}}, "config.train.lr"),
        ({"train": {"bogus": 1}}, "config.train.bogus"),
        ({"augment": {"spin": 1}}, "config.augment.spin"),
        ({"selection": [{"cap": -1}]}, "selection[0]"),
        ({"selection": {"cap": 1}}, "selection"),
        ({"k_checkpoints": 1}, "k_checkpoints"),
        ({"final_retrain": "yes"}, "config.final_retrain"),
        ({"seed": 1.5}, "config.seed"),
    ],
)
def test_schema_violations_name_the_field(doc, where):
    with pytest.raises(ConfigError, match=where.replace("[", r"\[").replace("]", r"\]")):
        config_from_dict(doc)


def test_hash_tracks_content():
    a = config_from_dict({"seed": 1})
    assert config_hash(a) == config_hash(config_from_dict({"seed": 1}))
    assert config_hash(a) != config_hash(config_from_dict({"seed": 2}))


def test_load_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(bad)
    arr = tmp_path / "arr.json"
    arr.write_text(json.dumps([1, 2]))
    with pytest.raises(ConfigError):
        load_config(arr)
