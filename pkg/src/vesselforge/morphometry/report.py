"""Scalar vessel parameters from a mask and its skeleton graph."""
from __future__ import annotations

import csv
import math
from dataclasses import astuple, dataclass, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..volume import BinaryMask
from .distance import nearest_feature_indices
from .graph import VesselGraph, build_graph, skeletonize

__all__ = [
    "MorphometryReport",
    "RADIUS_BINS_MM",
    "BV5_AREA_MM2",
    "surface_faces",
    "segment_volumes_ml",
    "segment_voxel_counts",
    "compute_report",
    "analyze_mask",
    "write_report_csv",
    "read_report_csv",
    "write_graph_csv",
    "REPORT_HEADER",
]

RADIUS_BINS_MM = ((0.0, 1.0), (1.0, 2.0), (2.0, 3.0), (3.0, 4.0))
BV5_AREA_MM2 = 5.0


@dataclass(frozen=True)
class MorphometryReport:
    tbv_ml: float
    surface_cm2: float
    n_segments: int
    n_endpoints: int
    n_branchpoints: int
    tree_length_mm: float
    bv5_ml: float
    bv5_tbv: float
    r0_1: int
    r1_2: int
    r2_3: int
    r3_4: int
    r_ge4: int

    def as_row(self) -> list:
        return list(astuple(self))

    @classmethod
    def empty(cls) -> "MorphometryReport":
        return cls(0.0, 0.0, 0, 0, 0, 0.0, 0.0, 0.0, 0, 0, 0, 0, 0)


REPORT_HEADER = ("scan_id",) + tuple(f.name for f in fields(MorphometryReport))


def surface_faces(mask: BinaryMask) -> tuple[int, int, int]:
    """Exposed voxel faces per axis ``(z, y, x)``; the grid border counts as background."""
    b = np.pad(mask.bits, 1, constant_values=False)
    return tuple(int(np.count_nonzero(np.diff(b.astype(np.int8), axis=ax))) for ax in range(3))


def _surface_cm2(mask: BinaryMask) -> float:
    dz, dy, dx = mask.spacing.as_tuple()
    fz, fy, fx = surface_faces(mask)
    return (fz * dy * dx + fy * dz * dx + fx * dz * dy) / 100.0


def segment_voxel_counts(mask: BinaryMask, graph: VesselGraph) -> np.ndarray:
    """Mask voxels per segment, each voxel going to its nearest owned skeleton voxel."""
    if graph.n_segments == 0 or not mask.bits.any():
        return np.zeros(graph.n_segments, dtype=np.int64)
    owned = graph.owner >= 0
    idx = nearest_feature_indices(owned, mask.spacing)
    seg = graph.owner[idx[0], idx[1], idx[2]][mask.bits]
    return np.bincount(seg, minlength=graph.n_segments).astype(np.int64)


def segment_volumes_ml(mask: BinaryMask, graph: VesselGraph) -> np.ndarray:
    """Mask volume split by nearest owned skeleton voxel; sums to the total blood volume."""
    return segment_voxel_counts(mask, graph) * mask.spacing.voxel_volume_mm3 / 1000.0


def _bin_counts(radii: Sequence[float]) -> list[int]:
    counts = [0] * (len(RADIUS_BINS_MM) + 1)
    for r in radii:
        for k, (lo, hi) in enumerate(RADIUS_BINS_MM):
            if lo <= r < hi:
                counts[k] += 1
                break
        else:
            counts[-1] += 1
    return counts


def compute_report(mask: BinaryMask, graph: VesselGraph, spacing=None, volumes=None) -> MorphometryReport:
    """Vessel parameters; ``spacing`` defaults to the mask's own."""
    if spacing is not None and tuple(spacing) != mask.spacing.as_tuple():
        mask = BinaryMask(mask.bits, spacing)
    n_vox = mask.count
    if n_vox == 0:
        return MorphometryReport.empty()
    voxel_ml = mask.spacing.voxel_volume_mm3 / 1000.0
    tbv = n_vox * voxel_ml
    if volumes is None:
        counts = segment_voxel_counts(mask, graph)
    else:
        counts = np.rint(np.asarray(volumes, dtype=np.float64) / voxel_ml).astype(np.int64)
    radii = [s.mean_radius_mm for s in graph.segments]
    small = np.array([math.pi * r * r < BV5_AREA_MM2 for r in radii], dtype=bool)
    # summed in voxels so that BV5 <= TBV holds exactly
    n_small = int(counts[small].sum()) if small.size else 0
    bv5 = n_small * voxel_ml
    bins = _bin_counts(radii)
    return MorphometryReport(
        tbv_ml=tbv,
        surface_cm2=_surface_cm2(mask),
        n_segments=graph.n_segments,
        n_endpoints=graph.n_endpoints,
        n_branchpoints=graph.n_branchpoints,
        tree_length_mm=graph.tree_length_mm,
        bv5_ml=bv5,
        bv5_tbv=n_small / n_vox,
        r0_1=bins[0],
        r1_2=bins[1],
        r2_3=bins[2],
        r3_4=bins[3],
        r_ge4=bins[4],
    )


def analyze_mask(mask: BinaryMask, spur_prune_mm: float = 0.0):
    """Skeletonize, build the graph and report in one call. Returns ``(report, graph, volumes)``."""
    skel = skeletonize(mask)
    graph = build_graph(skel, spur_prune_mm=spur_prune_mm)
    vols = segment_volumes_ml(mask, graph)
    return compute_report(mask, graph, volumes=vols), graph, vols


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.6f}"


def write_report_csv(rows: Iterable[tuple[str, MorphometryReport]], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        for scan_id, rep in rows:
            w.writerow([scan_id] + [_fmt(v) for v in rep.as_row()])
    return path


def read_report_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


GRAPH_HEADER = ("segment_id", "node_a", "node_b", "length_mm", "mean_radius_mm", "volume_ml")


def write_graph_csv(graph: VesselGraph, volumes, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(GRAPH_HEADER)
        for seg, vol in zip(graph.segments, volumes):
            w.writerow([
                seg.id,
                "" if seg.node_a is None else seg.node_a,
                "" if seg.node_b is None else seg.node_b,
                f"{seg.length_mm:.6f}",
                f"{seg.mean_radius_mm:.6f}",
                f"{float(vol):.9f}",
            ])
    return path
