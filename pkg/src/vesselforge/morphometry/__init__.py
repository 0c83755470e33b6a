"""Vessel quantification: distance maps, thinning, skeleton graphs and vessel parameters."""
from .distance import distance_map
from .graph import Node, Skeleton, VesselGraph, VesselSegment, build_graph, prune_spurs, skeletonize
from .report import (
    BV5_AREA_MM2,
    RADIUS_BINS_MM,
    REPORT_HEADER,
    MorphometryReport,
    analyze_mask,
    compute_report,
    read_report_csv,
    segment_volumes_ml,
    segment_voxel_counts,
    surface_faces,
    write_graph_csv,
    write_report_csv,
)
from .thinning import is_simple_point, thin

__all__ = [
    "distance_map",
    "thin",
    "is_simple_point",
    "Skeleton",
    "Node",
    "VesselSegment",
    "VesselGraph",
    "skeletonize",
    "build_graph",
    "prune_spurs",
    "MorphometryReport",
    "compute_report",
    "analyze_mask",
    "segment_volumes_ml",
    "segment_voxel_counts",
    "surface_faces",
    "write_report_csv",
    "read_report_csv",
    "write_graph_csv",
    "REPORT_HEADER",
    "RADIUS_BINS_MM",
    "BV5_AREA_MM2",
]
