import math

import numpy as np
import pytest

from oracles import dense_convolve3d
from vesselforge.features import (
    Codebook,
    FeatureConfig,
    FeatureExtractor,
    FeatureVolume,
    gaussian_kernel,
    gaussian_pyramid,
    kmeans_encode,
    kmeans_fit,
    raw_channels,
    voxel_features,
)
from vesselforge.volume import VolumeError, VolumeGrid


def test_single_level_is_the_input(rng):
    g = VolumeGrid(rng.normal(size=(5, 6, 7)), (1, 1, 1))
    (lv,) = gaussian_pyramid(g, levels=1)
    assert np.array_equal(lv.data, g.voxels.astype(np.float64))


def test_constant_grid_stays_constant():
    g = VolumeGrid(np.full((9, 10, 11), 4.25), (1, 1, 1))
    for lv in gaussian_pyramid(g, levels=3):
        np.testing.assert_allclose(lv.data, 4.25, rtol=1e-12)


def test_level_dims_follow_ceil_halving(rng):
    g = VolumeGrid(rng.normal(size=(9, 10, 17)), (1, 1, 1))
    for lv in gaussian_pyramid(g, levels=4):
        assert lv.dims == tuple(math.ceil(n / 2**lv.level) for n in g.dims)


def test_impulse_smoothing_matches_dense_convolution():
    imp = np.zeros((7, 7, 7))
    imp[3, 2, 4] = 1.0
    pyr = gaussian_pyramid(VolumeGrid(imp, (1, 1, 1)), levels=2, sigma_vox=1.0)
    dense = dense_convolve3d(imp, gaussian_kernel(1.0))
    np.testing.assert_allclose(pyr[1].data, dense[::2, ::2, ::2], atol=1e-6)


def test_too_small_grid():
    with pytest.raises(VolumeError):
        gaussian_pyramid(VolumeGrid(np.zeros((3, 8, 8)), (1, 1, 1)), levels=3)


def test_one_level_no_gradient_is_zscored_intensity(rng):
    g = VolumeGrid(rng.normal(3, 2, size=(6, 6, 6)), (1, 1, 1))
    fv = voxel_features(gaussian_pyramid(g, 1), include_gradient=False)
    v = g.voxels.astype(np.float64)
    assert fv.n_features == 1
    np.testing.assert_allclose(fv.features[0], (v - v.mean()) / v.std(), atol=1e-12)


def test_constant_grid_has_zero_gradient():
    raw = raw_channels(gaussian_pyramid(VolumeGrid(np.full((8, 8, 8), 7.0), (1, 1, 1)), 2))
    assert np.all(raw[2:] == 0)


def test_ramp_gradient_is_analytic_slope():
    slope, spacing = 2.5, (1.0, 1.0, 0.5)
    x = np.arange(16) * spacing[2]
    g = VolumeGrid(np.broadcast_to(slope * x, (8, 8, 16)), spacing)
    raw = raw_channels(gaussian_pyramid(g, 1))
    np.testing.assert_allclose(raw[1][1:-1, 1:-1, 1:-1], slope, atol=1e-5)


def test_kmeans_k_equals_n(rng):
    x = rng.normal(size=(6, 3))
    cb = kmeans_fit(x, 6, seed=1)
    assert cb.inertia == 0.0
    assert sorted(map(tuple, cb.centroids)) == sorted(map(tuple, x))


def test_kmeans_recovers_cloud_means(rng):
    a = rng.normal(0, 0.1, size=(50, 2))
    b = rng.normal(0, 0.1, size=(70, 2)) + 100
    cb = kmeans_fit(np.vstack([a, b]), 2, seed=3)
    got = sorted(map(tuple, cb.centroids))
    np.testing.assert_allclose(got[0], a.mean(0), atol=1e-9)
    np.testing.assert_allclose(got[1], b.mean(0), atol=1e-9)


def test_kmeans_inertia_non_increasing(rng):
    for seed in range(10):
        x = rng.normal(size=(300, 4))
        h = kmeans_fit(x, 6, seed=seed).history
        assert all(b <= a + 1e-9 for a, b in zip(h, h[1:]))


def _fv(arr):
    return FeatureVolume(np.asarray(arr, float), np.zeros(arr.shape[0]), np.ones(arr.shape[0]))


def test_encode_distance_zero_at_centroid(rng):
    feats = rng.normal(size=(2, 3, 3, 3))
    cb = Codebook(np.array([feats[:, 1, 2, 0], [9.0, 9.0]]), 0, 0.0)
    out = kmeans_encode(_fv(feats), cb, normalise=False)
    assert out.n_features == 4
    assert out.features[2, 1, 2, 0] == 0.0


def test_encode_k1_origin_is_norm(rng):
    feats = rng.normal(size=(3, 4, 4, 4))
    out = kmeans_encode(_fv(feats), Codebook(np.zeros((1, 3)), 0, 0.0), normalise=False)
    np.testing.assert_allclose(out.features[3], np.sqrt((feats**2).sum(0)), atol=1e-12)


def test_encode_matches_naive_loop(rng):
    feats = rng.normal(size=(4, 5, 5, 5))
    cents = rng.normal(size=(3, 4))
    cb = Codebook(cents.copy(), 0, 0.0)
    out = kmeans_encode(_fv(feats), cb, normalise=False)
    for j in range(3):
        for idx in np.ndindex(5, 5, 5):
            d = math.sqrt(sum((feats[(f,) + idx] - cents[j, f]) ** 2 for f in range(4)))
            assert abs(out.features[(4 + j,) + idx] - d) < 1e-9
    assert np.array_equal(cb.centroids, cents)


def test_extractor_round_trip_and_frozen_stats(tmp_path, rng):
    grids = [VolumeGrid(rng.normal(size=(8, 8, 8)) * (i + 1), (1, 1, 1)) for i in range(3)]
    ex = FeatureExtractor(FeatureConfig(levels=2, k=3, kmeans_samples=500, seed=2)).fit(grids)
    a = ex.transform(grids[0])
    assert a.n_features == FeatureConfig(levels=2, k=3).n_features == 7
    back = FeatureExtractor.load(ex.save(tmp_path / "ex.json"))
    b = back.transform(grids[0])
    assert np.array_equal(a.features, b.features)
    # same grid, same features; statistics are the training ones, not the scan's
    assert np.array_equal(ex.transform(grids[0]).features, a.features)
    np.testing.assert_array_equal(a.mean, back.transform(grids[2]).mean)


def test_unfitted_extractor():
    with pytest.raises(Exception):
        FeatureExtractor(FeatureConfig()).transform(VolumeGrid(np.zeros((8, 8, 8)), (1, 1, 1)))
