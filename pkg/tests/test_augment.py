import numpy as np
import pytest

from vesselforge.augment import AugmentationSpec, apply_strong, apply_weak, draw_strong, draw_weak
from vesselforge.augment import weak_matrix
from vesselforge.phantom import generate_tube_phantom
from vesselforge.volume import BinaryMask, VolumeGrid

IDENTITY = dict(rotation_deg=((0, 0),) * 3, scale_range=(1, 1), mirror_axes=(), elastic_sigma=0.0, gamma_range=(1, 1))


def _pair(rng, shape=(9, 10, 11)):
    return VolumeGrid(rng.normal(size=shape), (1, 1, 1)), BinaryMask(rng.random(shape) < 0.3, (1, 1, 1))


def test_identity_parameters_are_no_ops(rng):
    g, m = _pair(rng)
    spec = AugmentationSpec(**IDENTITY)
    for seed in range(10):
        assert apply_weak(g, m, spec, seed) == (g, m)
        assert apply_strong(g, m, spec, seed) == (g, m)


def test_double_mirror_is_identity(rng):
    g, m = _pair(rng)
    spec = AugmentationSpec(**{**IDENTITY, "mirror_axes": ("x",), "mirror_prob": 1.0})
    assert draw_weak(spec, 0).mirror == (False, False, True)
    g1, m1 = apply_weak(g, m, spec, 0)
    assert np.array_equal(g1.voxels, g.voxels[:, :, ::-1])
    assert apply_weak(g1, m1, spec, 0) == (g, m)


@pytest.mark.parametrize("axis", [0, 1, 2])
def test_right_angle_rotation_of_bar(axis):
    n = 11
    c = n // 2
    bits = np.zeros((n, n, n), bool)
    other = [k for k in range(3) if k != axis]
    sl = [c, c, c]
    sl[other[0]] = slice(2, 9)
    bits[tuple(sl)] = True
    rot = [(0.0, 0.0)] * 3
    rot[axis] = (90.0, 90.0)
    spec = AugmentationSpec(**{**IDENTITY, "rotation_deg": rot})
    m = BinaryMask(bits, (1, 1, 1))
    g = VolumeGrid(bits.astype(float), (1, 1, 1))
    _, out = apply_weak(g, m, spec, 0)
    # forward map v -> c + R (v - c) with R an exact signed permutation
    R = np.rint(weak_matrix(draw_weak(spec, 0))).astype(int)
    expected = np.zeros_like(bits)
    for v in np.argwhere(bits):
        expected[tuple(c + R @ (v - c))] = True
    assert np.array_equal(out.bits, expected)
    assert out.count == 7


def test_gamma_two_squares_unit_intensities(rng):
    img = rng.uniform(size=(6, 6, 6))
    img.flat[0], img.flat[1] = 0.0, 1.0
    g = VolumeGrid(img, (1, 1, 1))
    m = BinaryMask(rng.random((6, 6, 6)) < 0.5, (1, 1, 1))
    spec = AugmentationSpec(**{**IDENTITY, "gamma_range": (2.0, 2.0)})
    g2, m2 = apply_strong(g, m, spec, 0)
    src = g.voxels.astype(np.float64)
    assert np.max(np.abs(g2.voxels.astype(np.float64) - (src**2).astype(np.float32))) <= 1e-9
    assert m2 == m


def _ramp_pair(shape, axis, landmark):
    ramp = np.indices(shape)[axis].astype(np.float64) + 10.0
    return VolumeGrid(ramp, (1, 1, 1)), landmark


def _check_co_movement(apply, spec, seed, shape, mask):
    """The mask output equals the mask input sampled at the image's source coordinates."""
    src = []
    out_mask = None
    for axis in range(3):
        g, m = _ramp_pair(shape, axis, mask)
        g2, m2 = apply(g, m, spec, seed)
        src.append(g2.voxels.astype(np.float64) - 10.0)
        out_mask = m2 if out_mask is None else out_mask
        assert out_mask == m2
    src = np.stack(src)
    n = np.asarray(shape)[:, None, None, None]
    inside = np.all((src > 0.6) & (src < n - 1.6), axis=0)
    frac = np.abs(src - np.floor(src) - 0.5)
    clear = np.all(frac > 1e-3, axis=0)
    idx = np.rint(src).astype(int)
    sampled = mask.bits[idx[0].clip(0, shape[0] - 1), idx[1].clip(0, shape[1] - 1), idx[2].clip(0, shape[2] - 1)]
    ok = inside & clear
    assert ok.sum() > 0.3 * ok.size
    assert np.array_equal(out_mask.bits[ok], sampled[ok])


def test_landmarks_move_together(rng):
    shape = (14, 15, 16)
    spec = AugmentationSpec()
    for seed in range(100):
        mask = BinaryMask(rng.random(shape) < 0.2, (1, 1, 1))
        _check_co_movement(apply_weak, spec, seed, shape, mask)
        if seed % 4 == 0:
            warp = AugmentationSpec(gamma_range=(1, 1), elastic_grid_spacing=6.0, elastic_sigma=1.5)
            _check_co_movement(apply_strong, warp, seed, shape, mask)


def test_masks_stay_binary_and_elastic_keeps_volume():
    # r = 2 mm, L = 50 mm tube at 0.5 mm, with 5 mm of margin at either end
    grid, mask, _ = generate_tube_phantom((32, 32, 120), (0.5, 0.5, 0.5), 2.0, axis="x", length_mm=50.0)
    spec = AugmentationSpec()
    changes = []
    for seed in range(100):
        _, m2 = apply_strong(grid, mask, spec, seed)
        _, m3 = apply_weak(grid, mask, spec, seed)
        assert m2.bits.dtype == bool and m3.bits.dtype == bool
        changes.append(abs(m2.count - mask.count) / mask.count)
    assert max(changes) < 0.2


def test_gamma_never_touches_mask(rng):
    g, m = _pair(rng)
    spec = AugmentationSpec(elastic_sigma=0.0)
    for seed in range(20):
        assert apply_strong(g, m, spec, seed)[1] == m


def test_draws_are_reproducible():
    spec = AugmentationSpec(seed=3)
    assert draw_weak(spec, 11) == draw_weak(spec, 11)
    a, b = draw_strong(spec, (20, 20, 20), 5), draw_strong(spec, (20, 20, 20), 5)
    assert np.array_equal(a.displacement, b.displacement) and a.gamma == b.gamma
    assert draw_weak(spec, 11) != draw_weak(AugmentationSpec(seed=4), 11)


def test_spec_validation():
    with pytest.raises(ValueError):
        AugmentationSpec(scale_range=(1.2, 1.0))
    with pytest.raises(ValueError):
        AugmentationSpec(mirror_axes=("w",))
    assert AugmentationSpec.from_dict(AugmentationSpec().to_dict()) == AugmentationSpec()
