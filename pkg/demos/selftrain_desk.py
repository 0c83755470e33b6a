"""One desk-scale self-training run on a generated phantom corpus.

Prints test-set metrics after the supervised baseline, each selection
iteration and the final retrain. Takes about half a minute per seed.

    python3 demos/selftrain_desk.py [seed]
"""
import sys
from pathlib import Path

from vesselforge.config import load_config
from vesselforge.phantom import CorpusSpec, generate_corpus
from vesselforge.selftrain import Corpus, Scan, run_pipeline

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def build_corpus(seed: int) -> Corpus:
    splits = {"labeled": [], "unlabeled": [], "val": [], "test": []}
    for split, sid, grid, mask, _ in generate_corpus(CorpusSpec(seed=seed)):
        splits[split].append(Scan(sid, grid, None if split == "unlabeled" else mask))
    return Corpus(splits["labeled"], splits["unlabeled"], splits["val"], splits["test"])


def main(seed: int = 0) -> None:
    cfg = load_config(CONFIGS / "desk_pipeline.json").with_seed(seed)
    _, report = run_pipeline(cfg, build_corpus(seed))
    print(f"{'stage':12}{'dsc':>8}{'iou':>8}{'sens':>8}{'prec':>8}{'pseudo':>8}")
    for st in report.stages:
        m = st.metrics
        print(f"{st.name:12}{m['dsc']:8.4f}{m['iou']:8.4f}{m['sensitivity']:8.4f}{m['precision']:8.4f}"
              f"{len(st.split.selected):8d}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 0)
