"""Skeleton extraction and skeleton-to-graph conversion.

Skeleton voxels are classified by their number of 26-neighbours in the
skeleton: one neighbour makes an endpoint, three or more a branch voxel, two a
path interior. Touching branch voxels form a single branchpoint node.
Segments are the maximal interior paths between nodes; closed loops with no
node become one segment.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage as ndi

from ..volume import BinaryMask, Spacing
from .distance import distance_map
from .thinning import thin

__all__ = ["Skeleton", "Node", "VesselSegment", "VesselGraph", "skeletonize", "build_graph", "prune_spurs"]

_K26 = np.ones((3, 3, 3), dtype=np.int32)
_K26[1, 1, 1] = 0
_OFFSETS = np.array(
    [(dz, dy, dx) for dz in (-1, 0, 1) for dy in (-1, 0, 1) for dx in (-1, 0, 1) if (dz, dy, dx) != (0, 0, 0)],
    dtype=np.int64,
)


@dataclass(frozen=True, eq=False)
class Skeleton:
    bits: np.ndarray  # bool, dims of the source mask
    radius_mm: np.ndarray  # per-voxel distance-map radius (0 off the skeleton)
    spacing: Spacing

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(n) for n in self.bits.shape)

    @property
    def coords(self) -> np.ndarray:
        """Skeleton voxel indices ``(n, 3)`` in raster order."""
        return np.argwhere(self.bits)

    def degree(self) -> np.ndarray:
        return ndi.convolve(self.bits.astype(np.int32), _K26, mode="constant") * self.bits


def skeletonize(mask: BinaryMask) -> Skeleton:
    bits = thin(mask.bits)
    radius = np.where(bits, distance_map(mask), 0.0)
    return Skeleton(bits, radius, mask.spacing)


@dataclass(frozen=True)
class Node:
    id: int
    kind: str  # "endpoint" | "branchpoint"
    voxels: tuple[tuple[int, int, int], ...]

    @property
    def coord(self) -> tuple[float, float, float]:
        return tuple(float(v) for v in np.mean(self.voxels, axis=0))


@dataclass(frozen=True, eq=False)
class VesselSegment:
    id: int
    node_a: int | None
    node_b: int | None
    path: np.ndarray  # (m, 3) voxel indices, node voxels at either end included
    length_mm: float
    mean_radius_mm: float


@dataclass(frozen=True, eq=False)
class VesselGraph:
    nodes: list[Node]
    segments: list[VesselSegment]
    spacing: Spacing
    dims: tuple[int, int, int]
    owner: np.ndarray = field(repr=False)  # per-voxel segment id on the skeleton, -1 elsewhere

    @property
    def n_endpoints(self) -> int:
        return sum(1 for n in self.nodes if n.kind == "endpoint")

    @property
    def n_branchpoints(self) -> int:
        return sum(1 for n in self.nodes if n.kind == "branchpoint")

    @property
    def n_segments(self) -> int:
        return len(self.segments)

    @property
    def tree_length_mm(self) -> float:
        return float(sum(s.length_mm for s in self.segments))


def _path_length(path: np.ndarray, spacing: Spacing) -> float:
    if len(path) < 2:
        return 0.0
    steps = np.diff(path, axis=0) * np.asarray(spacing.as_tuple())
    return float(np.sqrt((steps**2).sum(1)).sum())


def prune_spurs(skel: Skeleton, max_length_mm: float, spacing=None) -> Skeleton:
    """Repeatedly drop endpoint-to-branchpoint segments shorter than ``max_length_mm``.

    Branch voxels are kept, so the pruned skeleton stays connected; segments
    without a branchpoint end are never removed. The remainder is thinned
    again so that stubs of a former junction cluster do not linger.
    """
    if max_length_mm <= 0:
        return skel
    bits = skel.bits.copy()
    while True:
        cur = Skeleton(bits, np.where(bits, skel.radius_mm, 0.0), skel.spacing)
        g = _build(cur, spacing)
        kinds = {n.id: n.kind for n in g.nodes}
        drop = []
        for seg in g.segments:
            ends = sorted(kinds.get(n) for n in (seg.node_a, seg.node_b) if n is not None)
            if ends == ["branchpoint", "endpoint"] and seg.length_mm < max_length_mm:
                drop.append(seg)
        if not drop:
            return cur
        for seg in drop:
            for v in seg.path:
                if g.owner[tuple(v)] == seg.id:
                    bits[tuple(v)] = False
        bits = thin(bits)


def build_graph(skel: Skeleton, spacing=None, spur_prune_mm: float = 0.0) -> VesselGraph:
    """Graph of the skeleton, optionally after spur pruning (off by default)."""
    if spur_prune_mm > 0:
        skel = prune_spurs(skel, spur_prune_mm, spacing)
    return _build(skel, spacing)


def _build(skel: Skeleton, spacing=None) -> VesselGraph:
    spacing = skel.spacing if spacing is None else Spacing.of(spacing)
    bits = skel.bits
    dims = skel.dims
    deg = skel.degree()
    coords = skel.coords
    n = len(coords)
    if n == 0:
        return VesselGraph([], [], spacing, dims, np.full(dims, -1, dtype=np.int64))

    vid = np.full(dims, -1, dtype=np.int64)
    vid[tuple(coords.T)] = np.arange(n)
    d = deg[tuple(coords.T)]

    # neighbour lists in a fixed offset order
    padded = np.pad(vid, 1, constant_values=-1)
    nbrs = []
    for c in coords:
        cand = padded[tuple((c + 1 + _OFFSETS).T)]
        nbrs.append(cand[cand >= 0])

    # nodes: endpoints individually, branch voxels merged by 26-adjacency
    node_of = np.full(n, -1, dtype=np.int64)
    nodes: list[Node] = []
    branch_bits = np.zeros(dims, dtype=bool)
    branch_bits[tuple(coords[d >= 3].T)] = True
    blabels, _ = ndi.label(branch_bits, structure=np.ones((3, 3, 3)))
    cluster_node: dict[int, int] = {}
    for i, c in enumerate(coords):
        if d[i] == 1:
            node_of[i] = len(nodes)
            nodes.append(Node(len(nodes), "endpoint", (tuple(int(v) for v in c),)))
        elif d[i] >= 3:
            lab = int(blabels[tuple(c)])
            if lab not in cluster_node:
                cluster_node[lab] = len(nodes)
                nodes.append(Node(len(nodes), "branchpoint", ()))
            node_of[i] = cluster_node[lab]
    # fill branch node voxel lists
    members: dict[int, list] = {}
    for i in np.flatnonzero(d >= 3):
        members.setdefault(int(node_of[i]), []).append(tuple(int(v) for v in coords[i]))
    nodes = [Node(nd.id, nd.kind, tuple(members.get(nd.id, nd.voxels))) for nd in nodes]

    radius = skel.radius_mm[tuple(coords.T)]
    visited = np.zeros(n, dtype=bool)
    seen_pairs: set[tuple[int, int]] = set()
    raw_segments: list[tuple[int | None, int | None, list[int]]] = []

    for v in range(n):
        if node_of[v] < 0:
            continue
        for u in nbrs[v]:
            if node_of[u] >= 0:
                if node_of[u] == node_of[v]:
                    continue
                key = (min(v, u), max(v, u))
                if key in seen_pairs:
                    continue
                seen_pairs.add(key)
                raw_segments.append((int(node_of[v]), int(node_of[u]), [v, int(u)]))
                continue
            if visited[u]:
                continue
            path = [v, int(u)]
            visited[u] = True
            prev, cur = v, int(u)
            end = None
            while True:
                nxt = [int(w) for w in nbrs[cur] if w != prev and (node_of[w] >= 0 or not visited[w])]
                if not nxt:
                    break
                # prefer stepping onto a node if one is adjacent
                node_steps = [w for w in nxt if node_of[w] >= 0]
                w = node_steps[0] if node_steps else nxt[0]
                path.append(w)
                if node_of[w] >= 0:
                    end = int(node_of[w])
                    break
                visited[w] = True
                prev, cur = cur, w
            raw_segments.append((int(node_of[v]), end, path))

    # loops made only of interior voxels
    for v in range(n):
        if node_of[v] >= 0 or visited[v] or d[v] == 0:
            continue
        path = [v]
        visited[v] = True
        prev, cur = -1, v
        while True:
            nxt = [int(w) for w in nbrs[cur] if w != prev and not visited[w]]
            if not nxt:
                break
            cur, prev = nxt[0], cur
            visited[cur] = True
            path.append(cur)
        path.append(v)
        raw_segments.append((None, None, path))

    # isolated voxels: one degenerate segment each
    for v in np.flatnonzero(d == 0):
        visited[v] = True
        raw_segments.append((None, None, [int(v)]))

    segments: list[VesselSegment] = []
    owner = np.full(dims, -1, dtype=np.int64)
    for sid, (a, b, path) in enumerate(raw_segments):
        pidx = np.asarray(path, dtype=np.int64)
        pc = coords[pidx]
        interior = [p for p in path if node_of[p] < 0 or nodes[node_of[p]].kind == "endpoint"]
        rvals = radius[np.asarray(interior)] if interior else radius[pidx]
        segments.append(VesselSegment(sid, a, b, pc, _path_length(pc, spacing), float(np.mean(rvals))))
        for p in interior:
            owner[tuple(coords[p])] = sid
    # branch voxels go to the lowest-numbered incident segment
    for i in np.flatnonzero(d >= 3):
        c = tuple(coords[i])
        if owner[c] < 0:
            inc = [s.id for s in segments if node_of[i] in (s.node_a, s.node_b)]
            owner[c] = min(inc) if inc else -1
    if (owner[bits] < 0).any():
        # branch clusters with no incident segment become their own segment
        lonely = np.argwhere(bits & (owner < 0))
        labs, _ = ndi.label(bits & (owner < 0), structure=np.ones((3, 3, 3)))
        for lab in np.unique(labs[tuple(lonely.T)]):
            pc = np.argwhere(labs == lab)
            sid = len(segments)
            segments.append(VesselSegment(sid, None, None, pc, 0.0, float(np.mean(skel.radius_mm[tuple(pc.T)]))))
            owner[tuple(pc.T)] = sid
    return VesselGraph(nodes, segments, spacing, dims, owner)
