import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_mask
from oracles import confusion_loop
from vesselforge.metrics import (
    ConfusionCounts,
    MetricError,
    confusion,
    dsc,
    iou,
    precision,
    score_masks,
    sensitivity,
    write_metrics_csv,
)
from vesselforge.volume import BinaryMask, VolumeError


def test_identical_masks():
    b = np.zeros((4, 4, 4), bool)
    b.flat[:10] = True
    c = confusion(b, b)
    assert (c.tp, c.fp, c.fn, c.tn) == (10, 0, 0, 54)
    assert dsc(c) == iou(c) == sensitivity(c) == precision(c) == 1.0


def test_empty_prediction():
    gt = np.zeros((3, 3, 3), bool)
    gt.flat[:7] = True
    c = confusion(np.zeros_like(gt), gt)
    assert c.tp == 0 and c.fn == 7
    assert dsc(c) == 0.0
    with pytest.raises(MetricError):
        precision(c)
    assert math.isnan(score_masks(np.zeros_like(gt), gt)["precision"])


def test_hand_arithmetic():
    c = ConfusionCounts(3, 1, 2, 10)
    assert dsc(c) == pytest.approx(6 / 9, abs=1e-15)
    assert iou(c) == 0.5
    assert sensitivity(c) == 0.6
    assert precision(c) == 0.75


def test_disjoint_masks():
    a = np.zeros((2, 2, 2), bool)
    b = a.copy()
    a[0, 0, 0] = b[1, 1, 1] = True
    c = confusion(a, b)
    assert dsc(c) == iou(c) == 0.0


def test_both_empty_counts_as_agreement():
    e = np.zeros((2, 2, 2), bool)
    c = confusion(e, e)
    assert dsc(c) == 1.0 and iou(c) == 1.0
    with pytest.raises(MetricError):
        sensitivity(c)


def test_random_pairs_match_loop(rng):
    for _ in range(30):
        p, g = random_mask(rng, (6, 6, 6), rng.uniform()), random_mask(rng, (6, 6, 6), rng.uniform())
        c = confusion(p, g)
        assert (c.tp, c.fp, c.fn, c.tn) == confusion_loop(p.bits, g.bits)


def test_dims_mismatch():
    with pytest.raises(VolumeError):
        confusion(np.zeros((2, 2, 2), bool), np.zeros((2, 2, 3), bool))


@given(st.integers(0, 500), st.integers(0, 500), st.integers(0, 500))
@settings(max_examples=200)
def test_count_identities(tp, fp, fn):
    c = ConfusionCounts(tp, fp, fn, 0)
    d, j = dsc(c), iou(c)
    assert 0 <= j <= d <= 1
    assert d == pytest.approx(2 * j / (1 + j), abs=1e-12)


def test_argument_swap_duality(rng):
    for _ in range(20):
        a, b = random_mask(rng), random_mask(rng)
        assert precision(confusion(a, b)) == sensitivity(confusion(b, a))


def test_permutation_invariance(rng):
    a, b = random_mask(rng), random_mask(rng)
    perm = rng.permutation(a.bits.size)
    pa = BinaryMask(a.bits.ravel()[perm].reshape(a.dims), a.spacing)
    pb = BinaryMask(b.bits.ravel()[perm].reshape(b.dims), b.spacing)
    assert score_masks(a, b) == score_masks(pa, pb)


def test_metrics_csv_layout(tmp_path):
    # full-scale reference magnitudes, used only to pin the CSV layout
    rows = [("fully", {"dsc": 0.855, "iou": 0.747, "sensitivity": 0.832, "precision": 0.880}),
            ("semi1", {"dsc": 0.855, "iou": 0.747, "sensitivity": 0.820, "precision": 0.895}),
            ("semi2", {"dsc": 0.850, "iou": 0.740, "sensitivity": 0.804, "precision": 0.903})]
    text = write_metrics_csv(rows, tmp_path / "m.csv").read_text()
    assert text.splitlines() == [
        "scan_id,dsc,iou,sensitivity,precision",
        "fully,0.8550,0.7470,0.8320,0.8800",
        "semi1,0.8550,0.7470,0.8200,0.8950",
        "semi2,0.8500,0.7400,0.8040,0.9030",
    ]
