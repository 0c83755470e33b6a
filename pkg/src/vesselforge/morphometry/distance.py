"""Exact Euclidean distance maps in physical units.

The grid is surrounded by one layer of virtual background, so a voxel on the
grid border is at most one voxel step from background even when the mask
fills the whole grid.
"""
from __future__ import annotations

import numpy as np
from scipy import ndimage as ndi

from ..volume import BinaryMask, Spacing

__all__ = ["distance_map", "nearest_feature_indices"]


def distance_map(mask: BinaryMask) -> np.ndarray:
    """Distance (mm) from every voxel centre to the nearest background voxel centre; 0 on background."""
    padded = np.pad(mask.bits, 1, mode="constant", constant_values=False)
    d = ndi.distance_transform_edt(padded, sampling=mask.spacing.as_tuple())
    return np.ascontiguousarray(d[1:-1, 1:-1, 1:-1])


def nearest_feature_indices(features: np.ndarray, spacing: Spacing) -> np.ndarray:
    """For every voxel, the ``(3, nz, ny, nx)`` index of the nearest ``True`` voxel of ``features``."""
    if not features.any():
        raise ValueError("no feature voxels to propagate from")
    _, idx = ndi.distance_transform_edt(~features, sampling=spacing.as_tuple(), return_indices=True)
    return idx
