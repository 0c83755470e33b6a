"""Self-training vessel segmentation and vascular morphometry for CT volumes."""
from .config import ConfigError, PipelineConfig, SelectionPolicy, SelectionRule, config_from_dict, load_config
from .metrics import score_masks
from .model import Checkpoint, TrainConfig, VoxelClassifier
from .selftrain import Corpus, PipelineReport, Scan, run_pipeline
from .volume import BinaryMask, Spacing, VolumeGrid, load_mask, load_volume, save_volume

__version__ = "0.1.0"

__all__ = [
    "BinaryMask",
    "Checkpoint",
    "ConfigError",
    "Corpus",
    "PipelineConfig",
    "PipelineReport",
    "Scan",
    "SelectionPolicy",
    "SelectionRule",
    "Spacing",
    "TrainConfig",
    "VolumeGrid",
    "VoxelClassifier",
    "config_from_dict",
    "load_config",
    "load_mask",
    "load_volume",
    "run_pipeline",
    "save_volume",
    "score_masks",
]
