"""Synthetic vessel phantoms with exactly known geometry.

Coordinates are physical millimetres in ``(z, y, x)`` order; voxel ``i`` has
its centre at ``i * spacing``. Trees are unions of capsules (cylinders with
hemispherical caps), so junctions close smoothly and thinning sees one
connected lumen.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from scipy.ndimage import correlate1d

from .features import gaussian_kernel
from .volume import BinaryMask, Spacing, VolumeGrid, VolumeError

__all__ = [
    "PhantomSpec",
    "CorpusSpec",
    "Segment",
    "generate_tube_phantom",
    "generate_tree_phantom",
    "grow_tree",
    "render_segments",
    "tree_truth",
    "segment_distance",
    "generate_corpus",
]


def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    return v / np.linalg.norm(v)


@dataclass(frozen=True)
class Segment:
    id: int
    start: tuple[float, float, float]
    end: tuple[float, float, float]
    radius_mm: float
    parent: int | None
    truncated: bool = False

    @property
    def length_mm(self) -> float:
        return float(np.linalg.norm(np.subtract(self.end, self.start)))


@dataclass(frozen=True)
class PhantomSpec:
    dims: tuple[int, int, int] = (64, 64, 64)
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    depth: int = 2
    root_radius_mm: float = 3.0
    radius_decay: float = 0.7
    branch_angle_deg: tuple[float, float] = (25.0, 45.0)
    segment_length_mm: tuple[float, float] = (14.0, 20.0)
    length_decay: float = 0.85
    root_start_mm: tuple[float, float, float] | None = None  # default: centre of the z=low face
    root_direction: tuple[float, float, float] | None = None  # default: +z with a seeded tilt
    min_radius_mm: float = 0.5
    margin_vox: float = 1.0
    vessel_intensity: float = 40.0
    background_intensity: float = -850.0
    noise_sigma: float = 0.0
    psf_sigma_mm: float = 0.0
    emphysema_blobs: int = 0
    emphysema_radius_mm: tuple[float, float] = (2.0, 5.0)
    emphysema_intensity: float = -980.0
    min_clearance_vox: float = 4.0
    primitive: str = "capsule"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(n) for n in self.dims))
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))
        for name in ("branch_angle_deg", "segment_length_mm", "emphysema_radius_mm"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        for name in ("root_start_mm", "root_direction"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, tuple(float(t) for t in v))
        if self.root_radius_mm <= 0 or self.radius_decay <= 0 or self.min_radius_mm <= 0:
            raise VolumeError("radii and decay must be positive")
        if self.vessel_intensity <= self.background_intensity:
            raise VolumeError("vessel intensity must exceed background intensity")
        if self.depth < 0:
            raise VolumeError("depth must be >= 0")
        if self.primitive not in ("capsule", "cylinder"):
            raise VolumeError(f"unknown primitive {self.primitive!r}")

    def to_dict(self) -> dict:
        return asdict(self)


# --------------------------------------------------------------------------
# geometry helpers


def _point_segment_dist(pts: np.ndarray, a: np.ndarray, b: np.ndarray, clamp: bool = True):
    """Distance from points ``(n, 3)`` to segment ab; also returns the axial parameter."""
    ab = b - a
    L2 = float(ab @ ab)
    t = ((pts - a) @ ab) / L2 if L2 > 0 else np.zeros(pts.shape[0])
    tc = np.clip(t, 0.0, 1.0) if clamp else t
    closest = a + tc[:, None] * ab
    return np.sqrt(((pts - closest) ** 2).sum(1)), t


def segment_distance(p0, p1, q0, q1) -> float:
    """Minimum Euclidean distance between segments p0p1 and q0q1."""
    p0, p1, q0, q1 = (np.asarray(v, dtype=np.float64) for v in (p0, p1, q0, q1))
    d1, d2, r = p1 - p0, q1 - q0, p0 - q0
    a, e, f = d1 @ d1, d2 @ d2, d2 @ r
    eps = 1e-12
    if a <= eps and e <= eps:
        return float(np.linalg.norm(r))
    if a <= eps:
        s, t = 0.0, float(np.clip(f / e, 0, 1))
    else:
        c = d1 @ r
        if e <= eps:
            t, s = 0.0, float(np.clip(-c / a, 0, 1))
        else:
            b = d1 @ d2
            den = a * e - b * b
            s = float(np.clip((b * f - c * e) / den, 0, 1)) if den > eps else 0.0
            t = (b * s + f) / e
            if t < 0:
                t, s = 0.0, float(np.clip(-c / a, 0, 1))
            elif t > 1:
                t, s = 1.0, float(np.clip((b - c) / a, 0, 1))
    return float(np.linalg.norm((p0 + d1 * s) - (q0 + d2 * t)))


def _centres(dims, spacing, lo=None, hi=None):
    lo = lo or (0, 0, 0)
    hi = hi or dims
    axes = [np.arange(l, h) * s for l, h, s in zip(lo, hi, spacing)]
    zz, yy, xx = np.meshgrid(*axes, indexing="ij")
    return np.stack([zz.ravel(), yy.ravel(), xx.ravel()], axis=1)


def render_segments(segments: Sequence[Segment], dims, spacing, primitive: str = "capsule") -> np.ndarray:
    """Boolean mask of voxel centres inside the union of the segment primitives."""
    out = np.zeros(dims, dtype=bool)
    sp = np.asarray(spacing, dtype=np.float64)
    for seg in segments:
        a, b = np.asarray(seg.start), np.asarray(seg.end)
        r = seg.radius_mm
        lo = np.maximum(np.floor((np.minimum(a, b) - r) / sp).astype(int) - 1, 0)
        hi = np.minimum(np.ceil((np.maximum(a, b) + r) / sp).astype(int) + 2, dims)
        if np.any(hi <= lo):
            continue
        pts = _centres(dims, spacing, tuple(lo), tuple(hi))
        if primitive == "capsule":
            d, _ = _point_segment_dist(pts, a, b)
            inside = d <= r
        else:
            d, t = _point_segment_dist(pts, a, b, clamp=False)
            inside = (d <= r) & (t >= 0) & (t <= 1)
        box = tuple(slice(l, h) for l, h in zip(lo, hi))
        out[box] |= inside.reshape(tuple(hi - lo))
    return out


def _paint(mask: np.ndarray, rng, spec: PhantomSpec) -> np.ndarray:
    sp = spec.spacing
    img = np.full(spec.dims, spec.background_intensity, dtype=np.float64)
    if spec.emphysema_blobs:
        extent = np.asarray(spec.dims) * np.asarray(sp)
        for _ in range(spec.emphysema_blobs):
            c = rng.uniform(0, extent)
            r = rng.uniform(*spec.emphysema_radius_mm)
            lo = np.maximum(np.floor((c - r) / sp).astype(int), 0)
            hi = np.minimum(np.ceil((c + r) / sp).astype(int) + 1, spec.dims)
            if np.any(hi <= lo):
                continue
            pts = _centres(spec.dims, sp, tuple(lo), tuple(hi))
            inside = (((pts - c) ** 2).sum(1) <= r * r).reshape(tuple(hi - lo))
            box = tuple(slice(l, h) for l, h in zip(lo, hi))
            img[box][inside] = spec.emphysema_intensity
    img[mask] = spec.vessel_intensity
    if spec.psf_sigma_mm > 0:
        # anisotropic blur expressed per axis in voxels
        for axis, s in enumerate(sp):
            img = correlate1d(img, gaussian_kernel(spec.psf_sigma_mm / s), axis=axis, mode="reflect")
    if spec.noise_sigma > 0:
        img = img + rng.normal(0.0, spec.noise_sigma, size=img.shape)
    return img


# --------------------------------------------------------------------------
# tube


def generate_tube_phantom(
    dims,
    spacing,
    radius_mm: float,
    axis: int | str = "x",
    length_mm: float | None = None,
    vessel_intensity: float = 40.0,
    background_intensity: float = -850.0,
    noise_sigma: float = 0.0,
    seed: int = 0,
):
    """Flat-ended cylinder through the grid centre along ``axis``.

    Returns ``(grid, mask, record)`` with the analytic cylinder volume, length
    and radius in ``record``.
    """
    dims = tuple(int(n) for n in dims)
    sp = Spacing.of(spacing)
    ax = {"z": 0, "y": 1, "x": 2}.get(axis, axis)
    if ax not in (0, 1, 2):
        raise VolumeError(f"axis must be z, y, x or 0..2, got {axis!r}")
    spt = sp.as_tuple()
    extent = [n * s for n, s in zip(dims, spt)]
    if length_mm is None:
        length_mm = extent[ax] - 2 * spt[ax]
    centre = np.array([(n // 2) * s for n, s in zip(dims, spt)])
    half = length_mm / 2
    if centre[ax] - half < -spt[ax] / 2 or centre[ax] + half > extent[ax] - spt[ax] / 2:
        raise VolumeError(f"tube of length {length_mm} mm exceeds grid extent {extent[ax]:.3f} mm")
    for k in range(3):
        if k != ax and (centre[k] - radius_mm < 0 or centre[k] + radius_mm > (dims[k] - 1) * spt[k]):
            raise VolumeError(f"tube radius {radius_mm} mm exceeds grid cross-section")
    a, b = centre.copy(), centre.copy()
    a[ax] -= half
    b[ax] += half
    seg = Segment(0, tuple(a), tuple(b), float(radius_mm), None)
    bits = render_segments([seg], dims, spt, primitive="cylinder")
    img = np.where(bits, vessel_intensity, background_intensity).astype(np.float64)
    if noise_sigma > 0:
        img = img + np.random.default_rng(seed).normal(0.0, noise_sigma, size=dims)
    record = {
        "volume_mm3": math.pi * radius_mm**2 * length_mm,
        "length_mm": float(length_mm),
        "radius_mm": float(radius_mm),
        "axis": int(ax),
        "start_mm": list(map(float, a)),
        "end_mm": list(map(float, b)),
    }
    return VolumeGrid(img, sp), BinaryMask(bits, sp), record


# --------------------------------------------------------------------------
# tree


def _perpendicular(d: np.ndarray, rng) -> np.ndarray:
    helper = np.array([1.0, 0.0, 0.0]) if abs(d[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = _unit(np.cross(d, helper))
    v = np.cross(d, u)
    phi = rng.uniform(0, 2 * math.pi)
    return math.cos(phi) * u + math.sin(phi) * v


def _clip(a: np.ndarray, b: np.ndarray, lo: np.ndarray, hi: np.ndarray):
    """Largest t in [0, 1] keeping a + t (b - a) inside the box [lo, hi]."""
    t = 1.0
    d = b - a
    for k in range(3):
        if d[k] > 0 and b[k] > hi[k]:
            t = min(t, (hi[k] - a[k]) / d[k])
        elif d[k] < 0 and b[k] < lo[k]:
            t = min(t, (lo[k] - a[k]) / d[k])
    return max(t, 0.0)


def grow_tree(spec: PhantomSpec, rng=None) -> list[Segment]:
    """Recursive binary branching from the root; branches are clipped to the grid."""
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    sp = np.asarray(spec.spacing)
    extent = (np.asarray(spec.dims) - 1) * sp
    lo = np.full(3, 0.0)
    hi = extent.copy()
    start = np.asarray(spec.root_start_mm) if spec.root_start_mm is not None else np.array(
        [spec.root_radius_mm + spec.margin_vox * sp[0], extent[1] / 2, extent[2] / 2]
    )
    if np.any(start < lo) or np.any(start > hi):
        raise VolumeError(f"root start {start.tolist()} lies outside the grid")
    if spec.root_direction is not None:
        direction = _unit(spec.root_direction)
    else:
        tilt = math.radians(rng.uniform(0, 10))
        direction = _unit(math.cos(tilt) * np.array([1.0, 0, 0]) + math.sin(tilt) * _perpendicular(np.array([1.0, 0, 0]), rng))

    segments: list[Segment] = []

    def grow(a, d, radius, length, level, parent):
        margin = radius + spec.margin_vox * sp.min()
        box_lo, box_hi = lo + margin, hi - margin
        b = a + d * length
        t = _clip(a, b, box_lo, box_hi)
        truncated = t < 1.0
        b = a + d * length * t
        if np.linalg.norm(b - a) < radius:  # nothing meaningful left inside
            return
        sid = len(segments)
        segments.append(Segment(sid, tuple(map(float, a)), tuple(map(float, b)), float(radius), parent, truncated))
        if truncated or level >= spec.depth:
            return
        child_r = radius * spec.radius_decay
        if child_r < spec.min_radius_mm:
            return
        u = _perpendicular(d, rng)
        for sign in (1.0, -1.0):
            theta = math.radians(rng.uniform(*spec.branch_angle_deg))
            cd = _unit(math.cos(theta) * d + sign * math.sin(theta) * u)
            cl = rng.uniform(*spec.segment_length_mm) * spec.length_decay ** (level + 1)
            grow(b, cd, child_r, cl, level + 1, sid)

    grow(start, direction, spec.root_radius_mm, rng.uniform(*spec.segment_length_mm), 0, None)
    return segments


def tree_truth(segments: Sequence[Segment], spacing, min_clearance_vox: float = 4.0) -> dict:
    """Ground-truth graph of a segment tree.

    Junctions with exactly two incident segments (a parent with one surviving
    child) are contracted, so counts describe the rendered vessel topology.
    """
    children: dict[int, list[int]] = {s.id: [] for s in segments}
    for s in segments:
        if s.parent is not None:
            children[s.parent].append(s.id)
    n_branch = sum(1 for s in segments if len(children[s.id]) >= 2)
    n_pass = sum(1 for s in segments if len(children[s.id]) == 1)
    n_leaf = sum(1 for s in segments if not children[s.id])
    n_end = n_leaf + (1 if segments else 0)  # leaves plus the root start
    n_seg = len(segments) - n_pass

    # clearance between segments that do not share a junction
    clear = math.inf
    by_id = {s.id: s for s in segments}
    for i, s in enumerate(segments):
        for t in segments[i + 1 :]:
            related = s.parent == t.id or t.parent == s.id or (s.parent is not None and s.parent == t.parent)
            if related:
                continue
            gap = segment_distance(s.start, s.end, t.start, t.end) - s.radius_mm - t.radius_mm
            clear = min(clear, gap)
    # siblings share a junction but their distal halves must separate
    for s in segments:
        kids = [by_id[c] for c in children[s.id]]
        if len(kids) == 2:
            a, b = kids
            mid_a = np.add(a.start, a.end) / 2
            mid_b = np.add(b.start, b.end) / 2
            sep = segment_distance(mid_a, a.end, mid_b, b.end) - a.radius_mm - b.radius_mm
            clear = min(clear, sep)
    min_sp = float(min(spacing))
    clearance_vox = clear / min_sp if math.isfinite(clear) else math.inf
    return {
        "n_segments": n_seg,
        "n_endpoints": n_end,
        "n_branchpoints": n_branch,
        "clearance_vox": None if math.isinf(clearance_vox) else float(clearance_vox),
        "clearance_ok": bool(clearance_vox >= min_clearance_vox),
        "segments": [
            {
                "id": s.id,
                "parent": s.parent,
                "start_mm": [float(v) for v in s.start],
                "end_mm": [float(v) for v in s.end],
                "radius_mm": float(s.radius_mm),
                "length_mm": float(s.length_mm),
                "truncated": bool(s.truncated),
            }
            for s in segments
        ],
    }


def generate_tree_phantom(spec: PhantomSpec):
    """Returns ``(grid, mask, truth)``; ``truth`` is the generator's own graph record."""
    rng = np.random.default_rng(spec.seed)
    segments = grow_tree(spec, rng)
    bits = render_segments(segments, spec.dims, spec.spacing, spec.primitive)
    img = _paint(bits, rng, spec)
    sp = Spacing.of(spec.spacing)
    truth = tree_truth(segments, spec.spacing, spec.min_clearance_vox)
    truth["kind"] = "tree"
    truth["seed"] = spec.seed
    return VolumeGrid(img, sp), BinaryMask(bits, sp), truth


# --------------------------------------------------------------------------
# corpus


@dataclass(frozen=True)
class CorpusSpec:
    n_labeled: int = 6
    n_unlabeled: int = 30
    n_val: int = 4
    n_test: int = 10
    base: PhantomSpec = field(default_factory=lambda: PhantomSpec(noise_sigma=60.0, psf_sigma_mm=0.7, emphysema_blobs=6))
    depth_range: tuple[int, int] = (2, 3)
    root_radius_range: tuple[float, float] = (2.0, 3.5)
    noise_range: tuple[float, float] = (40.0, 120.0)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "depth_range", tuple(int(v) for v in self.depth_range))
        for name in ("root_radius_range", "noise_range"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "CorpusSpec":
        d = dict(d)
        if "base" in d and isinstance(d["base"], dict):
            d["base"] = PhantomSpec(**d["base"])
        return cls(**d)


SPLITS = ("labeled", "unlabeled", "val", "test")


def generate_corpus(spec: CorpusSpec):
    """Yield ``(split, scan_id, grid, mask, truth)`` for every scan, in a fixed order."""
    counts = dict(zip(SPLITS, (spec.n_labeled, spec.n_unlabeled, spec.n_val, spec.n_test)))
    index = 0
    for split in SPLITS:
        for i in range(counts[split]):
            rng = np.random.default_rng([spec.seed, index])
            seed = int(rng.integers(2**31 - 1))
            ext = (np.asarray(spec.base.dims) - 1) * np.asarray(spec.base.spacing)
            root_r = float(rng.uniform(*spec.root_radius_range))
            start = (root_r + 1.0, float(rng.uniform(0.3, 0.7) * ext[1]), float(rng.uniform(0.3, 0.7) * ext[2]))
            ps = replace(
                spec.base,
                depth=int(rng.integers(spec.depth_range[0], spec.depth_range[1] + 1)),
                root_radius_mm=root_r,
                root_start_mm=start,
                noise_sigma=float(rng.uniform(*spec.noise_range)),
                seed=seed,
            )
            grid, mask, truth = generate_tree_phantom(ps)
            truth["split"] = split
            yield split, f"{split}{i:03d}", grid, mask, truth
            index += 1
