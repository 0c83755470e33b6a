"""Weak (rigid + mirror) and strong (elastic + gamma) augmentations.

Both operators warp image and mask with one shared coordinate map: the image
is sampled trilinearly, the mask by nearest neighbour, so masks stay binary.
Samples falling outside the grid take the image minimum and mask 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage as ndi

from .volume import BinaryMask, VolumeGrid, VolumeError

__all__ = ["AugmentationSpec", "WeakDraw", "StrongDraw", "draw_weak", "draw_strong", "apply_weak", "apply_strong"]

_AXES = {"z": 0, "y": 1, "x": 2}


def _pair(v) -> tuple[float, float]:
    lo, hi = (float(t) for t in v)
    return (lo, hi)


@dataclass(frozen=True)
class AugmentationSpec:
    # weak
    rotation_deg: tuple = ((-15.0, 15.0), (-15.0, 15.0), (-15.0, 15.0))  # about z, y, x
    scale_range: tuple = (0.9, 1.1)
    mirror_axes: tuple = ("z", "y", "x")
    mirror_prob: float = 0.5
    # strong
    elastic_grid_spacing: float = 16.0  # voxels between control points
    elastic_sigma: float = 4.0  # control-point displacement s.d., voxels
    gamma_range: tuple = (0.7, 1.4)
    seed: int = 0

    def __post_init__(self):
        rot = tuple(_pair(r) for r in self.rotation_deg)
        if len(rot) != 3:
            raise ValueError("rotation_deg needs one (lo, hi) range per axis")
        object.__setattr__(self, "rotation_deg", rot)
        object.__setattr__(self, "scale_range", _pair(self.scale_range))
        object.__setattr__(self, "gamma_range", _pair(self.gamma_range))
        object.__setattr__(self, "mirror_axes", tuple(self.mirror_axes))
        for lo, hi in rot + (self.scale_range, self.gamma_range):
            if lo > hi:
                raise ValueError(f"range ({lo}, {hi}) is not ordered")
        if self.scale_range[0] <= 0 or self.gamma_range[0] <= 0:
            raise ValueError("scale and gamma ranges must be positive")
        if any(a not in _AXES for a in self.mirror_axes):
            raise ValueError(f"mirror axes must be drawn from z, y, x: {self.mirror_axes}")
        if not 0 <= self.mirror_prob <= 1:
            raise ValueError("mirror_prob must lie in [0, 1]")
        if self.elastic_grid_spacing <= 0 or self.elastic_sigma < 0:
            raise ValueError("elastic grid spacing must be > 0 and sigma >= 0")

    def to_dict(self) -> dict:
        return {
            "rotation_deg": [list(r) for r in self.rotation_deg],
            "scale_range": list(self.scale_range),
            "mirror_axes": list(self.mirror_axes),
            "mirror_prob": self.mirror_prob,
            "elastic_grid_spacing": self.elastic_grid_spacing,
            "elastic_sigma": self.elastic_sigma,
            "gamma_range": list(self.gamma_range),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentationSpec":
        return cls(**d)


@dataclass(frozen=True)
class WeakDraw:
    angles_deg: tuple[float, float, float]
    scale: float
    mirror: tuple[bool, bool, bool]  # per z, y, x


@dataclass(frozen=True, eq=False)
class StrongDraw:
    displacement: np.ndarray | None  # (3, nz, ny, nx) voxels, None = no warp
    gamma: float


def _rng(spec: AugmentationSpec, draw_seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([int(spec.seed), int(draw_seed), stream])


def draw_weak(spec: AugmentationSpec, draw_seed: int) -> WeakDraw:
    rng = _rng(spec, draw_seed, 0)
    angles = tuple(float(rng.uniform(lo, hi)) if hi > lo else lo for lo, hi in spec.rotation_deg)
    lo, hi = spec.scale_range
    scale = float(rng.uniform(lo, hi)) if hi > lo else lo
    flips = rng.random(3)
    mirror = tuple(bool(a in spec.mirror_axes and flips[_AXES[a]] < spec.mirror_prob) for a in ("z", "y", "x"))
    return WeakDraw(angles, scale, mirror)


def _rotation(angles_deg) -> np.ndarray:
    # rotation about axis a acts in the plane of the remaining two axes
    out = np.eye(3)
    for axis, deg in enumerate(angles_deg):
        if deg == 0:
            continue
        t = math.radians(deg)
        c, s = math.cos(t), math.sin(t)
        i, j = [k for k in range(3) if k != axis]
        r = np.eye(3)
        r[i, i], r[i, j], r[j, i], r[j, j] = c, -s, s, c
        out = r @ out
    return out


def weak_matrix(draw: WeakDraw) -> np.ndarray:
    """Forward linear map (rotation then isotropic scale) about the grid centre."""
    return draw.scale * _rotation(draw.angles_deg)


def _check(grid: VolumeGrid, mask: BinaryMask):
    if grid.dims != mask.dims:
        raise VolumeError(f"grid {grid.dims} and mask {mask.dims} disagree")


def _flip(a: np.ndarray, mirror) -> np.ndarray:
    axes = tuple(i for i, m in enumerate(mirror) if m)
    return np.flip(a, axis=axes) if axes else a


def apply_weak(grid: VolumeGrid, mask: BinaryMask, spec: AugmentationSpec, draw_seed: int):
    _check(grid, mask)
    draw = draw_weak(spec, draw_seed)
    img = grid.voxels
    bits = mask.bits
    a = weak_matrix(draw)
    if not np.array_equal(a, np.eye(3)):
        inv = np.linalg.inv(a)
        centre = (np.asarray(grid.dims, dtype=np.float64) - 1) / 2
        offset = centre - inv @ centre
        fill = float(img.min())
        img = ndi.affine_transform(img.astype(np.float64), inv, offset=offset, order=1, mode="constant", cval=fill)
        bits = ndi.affine_transform(bits.astype(np.uint8), inv, offset=offset, order=0, mode="constant", cval=0) > 0
    img = _flip(img, draw.mirror)
    bits = _flip(bits, draw.mirror)
    return VolumeGrid(img, grid.spacing), BinaryMask(bits, mask.spacing)


def draw_strong(spec: AugmentationSpec, dims, draw_seed: int) -> StrongDraw:
    rng = _rng(spec, draw_seed, 1)
    lo, hi = spec.gamma_range
    gamma = float(rng.uniform(lo, hi)) if hi > lo else lo
    if spec.elastic_sigma == 0:
        return StrongDraw(None, gamma)
    g = spec.elastic_grid_spacing
    ctrl_shape = tuple(int(math.ceil((n - 1) / g)) + 1 for n in dims)
    ctrl = rng.normal(0.0, spec.elastic_sigma, size=(3,) + ctrl_shape)
    # free-form deformation: control displacements are cubic B-spline coefficients
    # (no interpolating prefilter, so the field never overshoots the lattice)
    coords = np.meshgrid(*(np.arange(n, dtype=np.float64) / g for n in dims), indexing="ij")
    disp = np.stack([ndi.map_coordinates(c, coords, order=3, mode="nearest", prefilter=False) for c in ctrl])
    return StrongDraw(disp, gamma)


def apply_strong(grid: VolumeGrid, mask: BinaryMask, spec: AugmentationSpec, draw_seed: int):
    """Elastic warp of image and mask, then gamma on intensities only."""
    _check(grid, mask)
    draw = draw_strong(spec, grid.dims, draw_seed)
    img = grid.voxels.astype(np.float64)
    bits = mask.bits
    if draw.displacement is not None:
        base = np.meshgrid(*(np.arange(n, dtype=np.float64) for n in grid.dims), indexing="ij")
        coords = [b + d for b, d in zip(base, draw.displacement)]
        fill = float(img.min())
        img = ndi.map_coordinates(img, coords, order=1, mode="constant", cval=fill)
        bits = ndi.map_coordinates(bits.astype(np.uint8), coords, order=0, mode="constant", cval=0) > 0
    if draw.gamma != 1.0:
        lo, hi = float(img.min()), float(img.max())
        if hi > lo:
            img = lo + (hi - lo) * np.power((img - lo) / (hi - lo), draw.gamma)
    return VolumeGrid(img, grid.spacing), BinaryMask(bits, mask.spacing)
