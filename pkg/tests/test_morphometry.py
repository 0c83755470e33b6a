import math

import numpy as np
import pytest

from oracles import edt_brute, exposed_faces_loop, flood_fill_components, simple_point_bfs
from vesselforge.morphometry import (
    REPORT_HEADER,
    MorphometryReport,
    Skeleton,
    analyze_mask,
    build_graph,
    compute_report,
    distance_map,
    is_simple_point,
    read_report_csv,
    segment_volumes_ml,
    skeletonize,
    surface_faces,
    thin,
    write_graph_csv,
    write_report_csv,
)
from vesselforge.phantom import generate_tube_phantom
from vesselforge.volume import BinaryMask, Spacing


def _mask(bits, spacing=(1, 1, 1)):
    return BinaryMask(np.asarray(bits, bool), spacing)


def _skel(bits, spacing=(1.0, 1.0, 1.0)):
    bits = np.asarray(bits, bool)
    return Skeleton(bits, bits.astype(float), Spacing.of(spacing))


def _cylinder(r=4, length=40, pad=3):
    n = 2 * (r + pad) + 1
    bits = np.zeros((length + 2 * pad, n, n), bool)
    yy, xx = np.indices((n, n)) - n // 2
    bits[pad : pad + length][:, yy**2 + xx**2 <= r * r] = True
    return bits


# -- distance map ----------------------------------------------------------


def test_single_voxel_distance():
    bits = np.zeros((3, 3, 3), bool)
    bits[1, 1, 1] = True
    assert distance_map(_mask(bits))[1, 1, 1] == 1.0


def test_cube_matches_brute_force():
    bits = np.zeros((9, 9, 9), bool)
    bits[1:8, 1:8, 1:8] = True
    d = distance_map(_mask(bits))
    np.testing.assert_allclose(d, edt_brute(bits, (1, 1, 1)), atol=1e-12)
    assert d[4, 4, 4] == 4.0


@pytest.mark.parametrize("spacing", [(1, 1, 1), (2, 1, 1), (0.7, 1.3, 0.5)])
def test_random_masks_match_brute_force(rng, spacing):
    for _ in range(5):
        bits = rng.random((7, 8, 6)) < 0.7
        d = distance_map(_mask(bits, spacing))
        np.testing.assert_allclose(d, edt_brute(bits, spacing), atol=1e-12)
        assert np.all(d[~bits] == 0)


def test_full_grid_uses_virtual_background():
    bits = np.ones((5, 5, 5), bool)
    np.testing.assert_allclose(distance_map(_mask(bits, (2, 1, 1))), edt_brute(bits, (2, 1, 1)), atol=1e-12)


# -- thinning --------------------------------------------------------------


def test_simple_point_matches_component_oracle(rng):
    for _ in range(3000):
        nb = rng.random((3, 3, 3)) < rng.uniform(0.2, 0.8)
        nb[1, 1, 1] = True
        assert is_simple_point(nb) == simple_point_bfs(nb)


def test_line_survives_thinning():
    bits = np.zeros((5, 5, 12), bool)
    bits[2, 2, 1:11] = True
    assert np.array_equal(thin(bits), bits)
    diag = np.zeros((8, 8, 8), bool)
    for i in range(1, 7):
        diag[i, i, 7 - i] = True
    assert np.array_equal(thin(diag), diag)


def test_cylinder_skeleton_is_axis_path():
    bits = _cylinder()
    sk = thin(bits)
    assert not (sk & ~bits).any()
    pts = np.argwhere(sk)
    c = bits.shape[1] // 2
    assert np.max(np.abs(pts[:, 1:] - c)) <= 1
    g = build_graph(_skel(sk))
    assert (g.n_segments, g.n_endpoints, g.n_branchpoints) == (1, 2, 0)
    assert len(flood_fill_components(sk)) == 1


def test_thinning_keeps_components_and_subset(rng):
    from scipy import ndimage as ndi

    for _ in range(8):
        bits = ndi.binary_dilation(rng.random((14, 14, 14)) < 0.01, iterations=2)
        sk = thin(bits)
        assert not (sk & ~bits).any()
        assert len(flood_fill_components(sk)) == len(flood_fill_components(bits))
        assert np.array_equal(thin(sk), sk)


# -- graph -----------------------------------------------------------------


def test_straight_path():
    bits = np.zeros((3, 3, 13), bool)
    bits[1, 1, 1:12] = True
    g = build_graph(_skel(bits))
    assert (g.n_segments, g.n_endpoints, g.n_branchpoints) == (1, 2, 0)
    assert g.tree_length_mm == 10.0


def test_y_shape():
    bits = np.zeros((3, 15, 15), bool)
    bits[1, 7, 1:8] = True  # arm along -x
    for i in range(1, 7):
        bits[1, 7 + i, 7 + i] = True
        bits[1, 7 - i, 7 + i] = True
    g = build_graph(_skel(bits))
    assert (g.n_segments, g.n_endpoints, g.n_branchpoints) == (3, 3, 1)
    assert g.tree_length_mm == pytest.approx(6 + 2 * 6 * math.sqrt(2), abs=1e-12)


def test_thick_junction_merges_into_one_node():
    bits = np.zeros((3, 12, 12), bool)
    bits[1, 5:7, 1:11] = False
    bits[1, 5, 1:11] = True
    bits[1, 1:11, 5] = True
    g = build_graph(_skel(bits))
    assert g.n_branchpoints == 1 and g.n_endpoints == 4 and g.n_segments == 4


def test_isolated_cycle_is_one_segment():
    bits = np.zeros((3, 7, 7), bool)
    # octagon: no corner voxels, so every voxel has exactly two 26-neighbours
    bits[1, 1, 2:5] = bits[1, 5, 2:5] = True
    bits[1, 2:5, 1] = bits[1, 2:5, 5] = True
    g = build_graph(_skel(bits))
    assert g.n_segments == 1 and g.n_endpoints == g.n_branchpoints == 0


def test_every_skeleton_voxel_is_owned(rng):
    from scipy import ndimage as ndi

    bits = ndi.binary_dilation(rng.random((16, 16, 16)) < 0.01, iterations=2)
    g = build_graph(skeletonize(_mask(bits)))
    sk = thin(bits)
    assert np.all(g.owner[sk] >= 0) and np.all(g.owner[~sk] == -1)


def test_spur_pruning():
    bits = np.zeros((3, 20, 20), bool)
    bits[1, 10, 1:19] = True
    bits[1, 11:13, 9] = True  # 2-voxel spur
    g0 = build_graph(_skel(bits))
    assert g0.n_segments == 3
    g1 = build_graph(_skel(bits), spur_prune_mm=3.0)
    assert (g1.n_segments, g1.n_endpoints, g1.n_branchpoints) == (1, 2, 0)
    assert build_graph(_skel(bits), spur_prune_mm=0.5).n_segments == 3


# -- report ----------------------------------------------------------------


def test_tube_report():
    _, mask, rec = generate_tube_phantom((32, 32, 120), (0.5, 0.5, 0.5), 2.0, axis="x", length_mm=50.0)
    rep, g, vols = analyze_mask(mask)
    analytic = math.pi * 4 * 50 / 1000
    assert abs(rep.tbv_ml - analytic) / analytic < 0.10
    assert (rep.n_segments, rep.n_endpoints, rep.n_branchpoints) == (1, 2, 0)
    assert math.pi * g.segments[0].mean_radius_mm ** 2 >= 5.0
    assert rep.bv5_ml == 0.0 and rep.bv5_tbv == 0.0
    assert vols.sum() == pytest.approx(rep.tbv_ml, rel=1e-12)


def test_thin_vessels_count_toward_bv5():
    bits = np.zeros((5, 5, 30), bool)
    bits[2, 2, 2:28] = True
    rep, _, _ = analyze_mask(_mask(bits))
    assert rep.bv5_ml == rep.tbv_ml and rep.bv5_tbv == 1.0
    assert rep.r1_2 == 1


def test_volumes_partition_and_report_invariants(rng):
    from scipy import ndimage as ndi

    for _ in range(5):
        bits = ndi.binary_dilation(rng.random((18, 18, 18)) < 0.008, iterations=int(rng.integers(1, 3)))
        mask = _mask(bits, (0.8, 0.6, 0.7))
        rep, g, vols = analyze_mask(mask)
        voxel = mask.spacing.voxel_volume_mm3 / 1000
        assert np.allclose(vols / voxel, np.rint(vols / voxel))
        assert int(round(vols.sum() / voxel)) == mask.count
        assert 0 <= rep.bv5_ml <= rep.tbv_ml + 1e-12 and 0 <= rep.bv5_tbv <= 1
        assert rep.r0_1 + rep.r1_2 + rep.r2_3 + rep.r3_4 + rep.r_ge4 == rep.n_segments
        assert all(v >= 0 for v in rep.as_row())


def test_surface_matches_face_loop(rng):
    bits = rng.random((6, 7, 5)) < 0.5
    assert sum(surface_faces(_mask(bits))) == exposed_faces_loop(bits)
    single = np.zeros((3, 3, 3), bool)
    single[1, 1, 1] = True
    rep = compute_report(_mask(single, (1, 2, 3)), build_graph(_skel(single)))
    assert rep.surface_cm2 == pytest.approx(2 * (2 * 3 + 1 * 3 + 1 * 2) / 100, abs=1e-15)


def test_radius_bin_edges():
    from vesselforge.morphometry.report import _bin_counts

    assert _bin_counts([0.0, 0.999, 1.0, 2.0, 3.999, 4.0, 9.0]) == [2, 1, 1, 1, 2]


def test_empty_mask_report():
    rep, g, vols = analyze_mask(_mask(np.zeros((4, 4, 4), bool)))
    assert rep == MorphometryReport.empty() and g.n_segments == 0 and vols.size == 0


def _tree(rng):
    from vesselforge.phantom import PhantomSpec, generate_tree_phantom

    _, mask, _ = generate_tree_phantom(PhantomSpec(dims=(48, 48, 48), depth=2, root_radius_mm=2.0,
                                                   segment_length_mm=(12, 16), seed=int(rng.integers(100))))
    return mask


def test_spacing_doubling_scales_lengths_and_volume(rng):
    mask = _tree(rng)
    a, _, _ = analyze_mask(mask)
    b, _, _ = analyze_mask(BinaryMask(mask.bits, (2.0, 2.0, 2.0)))
    assert b.tbv_ml == pytest.approx(8 * a.tbv_ml, rel=1e-12)
    assert b.tree_length_mm == pytest.approx(2 * a.tree_length_mm, rel=1e-12)
    assert b.surface_cm2 == pytest.approx(4 * a.surface_cm2, rel=1e-12)
    assert (b.n_segments, b.n_endpoints, b.n_branchpoints) == (a.n_segments, a.n_endpoints, a.n_branchpoints)


@pytest.mark.parametrize("axis", [0, 1, 2])
def test_counts_invariant_under_mirroring(rng, axis):
    mask = _tree(rng)
    a, _, _ = analyze_mask(mask)
    b, _, _ = analyze_mask(BinaryMask(np.flip(mask.bits, axis), mask.spacing))
    assert (b.n_segments, b.n_endpoints, b.n_branchpoints) == (a.n_segments, a.n_endpoints, a.n_branchpoints)
    assert b.tbv_ml == a.tbv_ml


def test_report_csv_layout(tmp_path):
    # full-scale reference magnitudes, used only to pin the CSV layout
    g1 = MorphometryReport(214.2, 0, 0, 0, 0, 0, 0.570 * 214.2, 0.570, 0, 0, 0, 0, 0)
    g4 = MorphometryReport(267.6, 0, 0, 0, 0, 0, 0.521 * 267.6, 0.521, 0, 0, 0, 0, 0)
    p = write_report_csv([("gold1", g1), ("gold4", g4)], tmp_path / "r.csv")
    lines = p.read_text().splitlines()
    assert lines[0] == ",".join(REPORT_HEADER)
    assert lines[0] == ("scan_id,tbv_ml,surface_cm2,n_segments,n_endpoints,n_branchpoints,tree_length_mm,"
                        "bv5_ml,bv5_tbv,r0_1,r1_2,r2_3,r3_4,r_ge4")
    rows = read_report_csv(p)
    assert float(rows[0]["tbv_ml"]) == 214.2 and float(rows[1]["bv5_tbv"]) == 0.521


def test_graph_csv(tmp_path):
    bits = np.zeros((3, 3, 13), bool)
    bits[1, 1, 1:12] = True
    rep, g, vols = analyze_mask(_mask(bits))
    lines = write_graph_csv(g, vols, tmp_path / "g.csv").read_text().splitlines()
    assert lines[0] == "segment_id,node_a,node_b,length_mm,mean_radius_mm,volume_ml"
    assert len(lines) == 2 and lines[1].startswith("0,")
