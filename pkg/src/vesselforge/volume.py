"""3D grids, binary masks, the ``.vvol`` file pair, and mask topology helpers.

Arrays are indexed ``[z, y, x]`` (row-major, z slowest). Every grid carries its
physical spacing in millimetres so downstream volumes and lengths are in
real units.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence, Union

import numpy as np
from scipy import ndimage as ndi

__all__ = [
    "VolumeError",
    "AnnotationError",
    "Spacing",
    "VolumeGrid",
    "BinaryMask",
    "LabeledComponents",
    "VesselPoint",
    "save_volume",
    "load_volume",
    "load_mask",
    "volume_paths",
    "load_vessel12_points",
    "points_to_mask",
    "resample_trilinear",
    "resample_mask",
    "crop",
    "connected_components",
    "remove_small_components",
    "fuse_coarse_labels",
]


class VolumeError(ValueError):
    """Invalid grid, header, or geometry request."""


class AnnotationError(ValueError):
    """Malformed or out-of-bounds row in a point-annotation CSV."""


@dataclass(frozen=True)
class Spacing:
    dz: float
    dy: float
    dx: float

    def __post_init__(self):
        for name in ("dz", "dy", "dx"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float, np.floating, np.integer)) and math.isfinite(v) and v > 0):
                raise VolumeError(f"spacing {name} must be positive and finite, got {v!r}")
            object.__setattr__(self, name, float(v))

    @classmethod
    def iso(cls, d: float) -> "Spacing":
        return cls(d, d, d)

    @classmethod
    def of(cls, value) -> "Spacing":
        if isinstance(value, Spacing):
            return value
        dz, dy, dx = value
        return cls(dz, dy, dx)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.dz, self.dy, self.dx)

    @property
    def voxel_volume_mm3(self) -> float:
        return self.dz * self.dy * self.dx


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class VolumeGrid:
    """Scalar intensities (float32) with physical spacing."""

    voxels: np.ndarray
    spacing: Spacing

    def __post_init__(self):
        v = np.asarray(self.voxels)
        if v.ndim != 3:
            raise VolumeError(f"expected a 3D array, got shape {v.shape}")
        if v.size == 0:
            raise VolumeError("grid has no voxels")
        v = v.astype(np.float32, copy=True)
        if not np.all(np.isfinite(v)):
            raise VolumeError("grid contains non-finite values")
        object.__setattr__(self, "voxels", _frozen(v))
        object.__setattr__(self, "spacing", Spacing.of(self.spacing))

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(n) for n in self.voxels.shape)

    def __eq__(self, other):
        if not isinstance(other, VolumeGrid):
            return NotImplemented
        return self.spacing == other.spacing and np.array_equal(self.voxels, other.voxels)


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """One boolean per voxel; ``True`` marks vessel."""

    bits: np.ndarray
    spacing: Spacing

    def __post_init__(self):
        b = np.asarray(self.bits)
        if b.ndim != 3:
            raise VolumeError(f"expected a 3D array, got shape {b.shape}")
        if b.dtype != bool:
            if not np.all((b == 0) | (b == 1)):
                raise VolumeError("mask values must be 0 or 1")
        object.__setattr__(self, "bits", _frozen(b.astype(bool, copy=True)))
        object.__setattr__(self, "spacing", Spacing.of(self.spacing))

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(n) for n in self.bits.shape)

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.bits))

    def __eq__(self, other):
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.spacing == other.spacing and np.array_equal(self.bits, other.bits)


Grid = Union[VolumeGrid, BinaryMask]


@dataclass(frozen=True, eq=False)
class LabeledComponents:
    labels: np.ndarray  # int32, 0 = background
    count: int
    sizes: np.ndarray  # sizes[i] = voxels carrying label i + 1

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(n) for n in self.labels.shape)


def _data(grid: Grid) -> np.ndarray:
    return grid.bits if isinstance(grid, BinaryMask) else grid.voxels


def _like(grid: Grid, data: np.ndarray, spacing: Spacing | None = None) -> Grid:
    sp = grid.spacing if spacing is None else spacing
    if isinstance(grid, BinaryMask):
        return BinaryMask(data, sp)
    return VolumeGrid(data, sp)


# --------------------------------------------------------------------------
# .vvol file pair

_DTYPES = {"f32": np.dtype("<f4"), "u8": np.dtype("u1")}
_HEADER_SUFFIX = ".vvol.json"
_RAW_SUFFIX = ".vvol.raw"


def volume_paths(path) -> tuple[Path, Path]:
    """Return ``(header, raw)`` paths for a base name or either member of the pair."""
    p = str(path)
    for suffix in (_HEADER_SUFFIX, _RAW_SUFFIX):
        if p.endswith(suffix):
            p = p[: -len(suffix)]
            break
    return Path(p + _HEADER_SUFFIX), Path(p + _RAW_SUFFIX)


def save_volume(grid: Grid, path) -> Path:
    """Write ``grid`` as a header/raw pair and return the header path."""
    header_path, raw_path = volume_paths(path)
    if isinstance(grid, BinaryMask):
        dtype = "u8"
        payload = grid.bits.astype(_DTYPES["u8"])
    else:
        dtype = "f32"
        payload = grid.voxels.astype(_DTYPES["f32"])
    header = {
        "dims": list(grid.dims),
        "spacing_mm": list(grid.spacing.as_tuple()),
        "dtype": dtype,
        "order": "zyx-row-major",
        "endianness": "little",
    }
    header_path.parent.mkdir(parents=True, exist_ok=True)
    header_path.write_text(json.dumps(header, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    raw_path.write_bytes(np.ascontiguousarray(payload).tobytes(order="C"))
    return header_path


def load_volume(path) -> Grid:
    """Read a ``.vvol`` pair. ``u8`` payloads come back as :class:`BinaryMask`."""
    header_path, raw_path = volume_paths(path)
    if not header_path.is_file():
        raise FileNotFoundError(f"missing volume header {header_path}")
    if not raw_path.is_file():
        raise FileNotFoundError(f"missing volume payload {raw_path}")
    try:
        header = json.loads(header_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise VolumeError(f"{header_path}: invalid JSON ({exc})") from exc

    dims = header.get("dims")
    if not (isinstance(dims, list) and len(dims) == 3 and all(isinstance(n, int) and n > 0 for n in dims)):
        raise VolumeError(f"{header_path}: dims must be three positive integers, got {dims!r}")
    spacing_mm = header.get("spacing_mm")
    if not (isinstance(spacing_mm, list) and len(spacing_mm) == 3):
        raise VolumeError(f"{header_path}: spacing_mm must have three entries")
    spacing = Spacing.of(spacing_mm)
    dtype_name = header.get("dtype")
    if dtype_name not in _DTYPES:
        raise VolumeError(f"{header_path}: unsupported dtype {dtype_name!r}")
    if header.get("order", "zyx-row-major") != "zyx-row-major":
        raise VolumeError(f"{header_path}: unsupported order {header.get('order')!r}")
    if header.get("endianness", "little") != "little":
        raise VolumeError(f"{header_path}: unsupported endianness {header.get('endianness')!r}")

    dtype = _DTYPES[dtype_name]
    raw = raw_path.read_bytes()
    expected = dims[0] * dims[1] * dims[2]
    if len(raw) != expected * dtype.itemsize:
        raise VolumeError(
            f"{raw_path}: size mismatch, header dims {dims} need {expected} values "
            f"but payload holds {len(raw) / dtype.itemsize:g}"
        )
    data = np.frombuffer(raw, dtype=dtype).reshape(dims)
    if dtype_name == "u8":
        return BinaryMask(data, spacing)
    return VolumeGrid(data.astype(np.float32), spacing)


def load_mask(path) -> BinaryMask:
    out = load_volume(path)
    if not isinstance(out, BinaryMask):
        raise VolumeError(f"{path}: expected a u8 mask, found an f32 grid")
    return out


# --------------------------------------------------------------------------
# VESSEL12-style point annotations


class VesselPoint(NamedTuple):
    x: int
    y: int
    z: int
    label: int

    @property
    def index(self) -> tuple[int, int, int]:
        """Array index ``(z, y, x)``."""
        return (self.z, self.y, self.x)


def load_vessel12_points(path, dims: Sequence[int], spacing=None) -> list[VesselPoint]:
    """Parse ``x, y, z, label`` rows (zero-based voxel indices, no header).

    ``dims`` is ``(nz, ny, nx)``. ``spacing`` is accepted for symmetry with the
    other loaders; coordinates are voxel indices and need no conversion.
    """
    nz, ny, nx = (int(n) for n in dims)
    points: list[VesselPoint] = []
    with open(path, newline="", encoding="utf-8") as fh:
        for rowno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 4:
                raise AnnotationError(f"row {rowno}: expected 4 fields, got {len(row)}")
            try:
                x, y, z, label = (int(cell.strip()) for cell in row)
            except ValueError:
                raise AnnotationError(f"row {rowno}: non-integer field in {row!r}") from None
            if label not in (0, 1):
                raise AnnotationError(f"row {rowno}: label must be 0 or 1, got {label}")
            if not (0 <= x < nx and 0 <= y < ny and 0 <= z < nz):
                raise AnnotationError(
                    f"row {rowno}: point (x={x}, y={y}, z={z}) outside grid (nx={nx}, ny={ny}, nz={nz})"
                )
            points.append(VesselPoint(x, y, z, label))
    return points


def points_to_mask(points: Sequence[VesselPoint], dims: Sequence[int], spacing) -> BinaryMask:
    bits = np.zeros(tuple(int(n) for n in dims), dtype=bool)
    for p in points:
        if p.label == 1:
            bits[p.index] = True
    return BinaryMask(bits, Spacing.of(spacing))


# --------------------------------------------------------------------------
# geometry


def _resampled_dims(grid: Grid, target: Spacing) -> tuple[int, ...]:
    dims = []
    for n, old, new in zip(grid.dims, grid.spacing.as_tuple(), target.as_tuple()):
        m = int(round(n * old / new))
        dims.append(max(m, 1))
    return tuple(dims)


def _sample_coords(grid: Grid, target: Spacing, out_dims) -> list[np.ndarray]:
    axes = [
        np.arange(m, dtype=np.float64) * (new / old)
        for m, old, new in zip(out_dims, grid.spacing.as_tuple(), target.as_tuple())
    ]
    return np.meshgrid(*axes, indexing="ij")


def resample_trilinear(grid: Grid, target) -> Grid:
    """Resample to ``target`` spacing. Output voxel ``i`` sits at physical ``i * target``.

    Intensity grids are interpolated trilinearly (edge-clamped); masks go
    through :func:`resample_mask` so they stay binary.
    """
    target = Spacing.of(target)
    if isinstance(grid, BinaryMask):
        return resample_mask(grid, target)
    if target == grid.spacing:
        return VolumeGrid(grid.voxels, target)
    out_dims = _resampled_dims(grid, target)
    coords = _sample_coords(grid, target, out_dims)
    out = ndi.map_coordinates(grid.voxels.astype(np.float64), coords, order=1, mode="nearest")
    return VolumeGrid(out, target)


def resample_mask(mask: BinaryMask, target) -> BinaryMask:
    target = Spacing.of(target)
    if target == mask.spacing:
        return BinaryMask(mask.bits, target)
    out_dims = _resampled_dims(mask, target)
    coords = _sample_coords(mask, target, out_dims)
    out = ndi.map_coordinates(mask.bits.astype(np.uint8), coords, order=0, mode="nearest")
    return BinaryMask(out.astype(bool), target)


def crop(grid: Grid, origin: Sequence[int], size: Sequence[int]) -> Grid:
    origin = tuple(int(o) for o in origin)
    size = tuple(int(s) for s in size)
    if len(origin) != 3 or len(size) != 3:
        raise VolumeError("origin and size must be voxel triples")
    for o, s, n in zip(origin, size, grid.dims):
        if o < 0 or s < 1 or o + s > n:
            raise VolumeError(f"crop window origin={origin} size={size} exceeds dims {grid.dims}")
    sl = tuple(slice(o, o + s) for o, s in zip(origin, size))
    return _like(grid, _data(grid)[sl])


# --------------------------------------------------------------------------
# topology


def _structure(connectivity: int) -> np.ndarray:
    if connectivity == 6:
        return ndi.generate_binary_structure(3, 1)
    if connectivity == 26:
        return ndi.generate_binary_structure(3, 3)
    raise VolumeError(f"connectivity must be 6 or 26, got {connectivity}")


def connected_components(mask: BinaryMask, connectivity: int = 26) -> LabeledComponents:
    """Label foreground components; label order follows each component's first voxel in raster order."""
    raw, count = ndi.label(mask.bits, structure=_structure(connectivity))
    flat = raw.ravel()
    if count:
        ids, first = np.unique(flat, return_index=True)
        keep = ids > 0
        ids, first = ids[keep], first[keep]
        order = ids[np.argsort(first, kind="stable")]
        remap = np.zeros(count + 1, dtype=np.int32)
        remap[order] = np.arange(1, count + 1, dtype=np.int32)
        labels = remap[raw]
        sizes = np.bincount(labels.ravel(), minlength=count + 1)[1:]
    else:
        labels = np.zeros(mask.dims, dtype=np.int32)
        sizes = np.zeros(0, dtype=np.int64)
    return LabeledComponents(_frozen(labels.astype(np.int32)), int(count), _frozen(sizes.astype(np.int64)))


def remove_small_components(mask: BinaryMask, min_voxels: int, connectivity: int = 26) -> BinaryMask:
    if min_voxels < 1:
        raise VolumeError(f"min_voxels must be >= 1, got {min_voxels}")
    cc = connected_components(mask, connectivity)
    keep = np.concatenate([[False], cc.sizes >= min_voxels])
    return BinaryMask(keep[cc.labels], mask.spacing)


def fuse_coarse_labels(mask_a: BinaryMask, mask_b: BinaryMask, mode: str = "intersection") -> BinaryMask:
    """Combine two coarse vessel masks voxelwise. Intersection drops tissue only one source calls vessel."""
    if mask_a.dims != mask_b.dims:
        raise VolumeError(f"dims mismatch: {mask_a.dims} vs {mask_b.dims}")
    if mode == "intersection":
        bits = mask_a.bits & mask_b.bits
    elif mode == "union":
        bits = mask_a.bits | mask_b.bits
    else:
        raise VolumeError(f"unknown fusion mode {mode!r}")
    return BinaryMask(bits, mask_a.spacing)
