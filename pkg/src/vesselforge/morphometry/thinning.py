"""Topology-preserving 3D thinning (26-connected foreground, 6-connected background).

Each pass runs six directional subiterations (-z, +z, -y, +y, -x, +x). A
subiteration first collects border voxels open in its direction that are
simple and not endpoints, then deletes them one at a time in raster order,
re-testing each against the already-thinned image. Sequential deletion of
simple points cannot change topology, so component, cavity and tunnel counts
are preserved. Passes repeat until nothing is deleted.
"""
from __future__ import annotations

import numpy as np
from numba import njit

__all__ = ["thin", "is_simple_point"]


def _tables():
    offs = [(dz, dy, dx) for dz in (-1, 0, 1) for dy in (-1, 0, 1) for dx in (-1, 0, 1)]
    adj26 = np.full((27, 26), -1, dtype=np.int64)
    adj6 = np.full((27, 6), -1, dtype=np.int64)
    for i, a in enumerate(offs):
        n26 = n6 = 0
        for j, b in enumerate(offs):
            if i == j:
                continue
            d = [abs(a[k] - b[k]) for k in range(3)]
            if max(d) == 1:
                adj26[i, n26] = j
                n26 += 1
                if sum(d) == 1:
                    adj6[i, n6] = j
                    n6 += 1
    l1 = np.array([abs(o[0]) + abs(o[1]) + abs(o[2]) for o in offs], dtype=np.int64)
    return adj26, adj6, l1


_ADJ26, _ADJ6, _L1 = _tables()


@njit(cache=True)
def _simple(nb, adj26, adj6, l1):
    # nb: 27 booleans, index 13 is the centre voxel (ignored)
    # T26: 26-components of foreground in N26 \ {p}
    seen = np.zeros(27, dtype=np.bool_)
    stack = np.empty(27, dtype=np.int64)
    ncomp = 0
    for s in range(27):
        if s == 13 or not nb[s] or seen[s]:
            continue
        ncomp += 1
        if ncomp > 1:
            return False
        top = 0
        stack[top] = s
        seen[s] = True
        while top >= 0:
            v = stack[top]
            top -= 1
            for k in range(26):
                u = adj26[v, k]
                if u < 0:
                    break
                if u != 13 and nb[u] and not seen[u]:
                    seen[u] = True
                    top += 1
                    stack[top] = u
    if ncomp != 1:
        return False
    # T6: 6-components of background in N18 \ {p} that touch a face neighbour
    seen[:] = False
    ncomp = 0
    for s in range(27):
        if l1[s] != 1 or nb[s] or seen[s]:
            continue
        ncomp += 1
        if ncomp > 1:
            return False
        top = 0
        stack[top] = s
        seen[s] = True
        while top >= 0:
            v = stack[top]
            top -= 1
            for k in range(6):
                u = adj6[v, k]
                if u < 0:
                    break
                if u != 13 and l1[u] <= 2 and not nb[u] and not seen[u]:
                    seen[u] = True
                    top += 1
                    stack[top] = u
    return ncomp == 1


@njit(cache=True)
def _gather(img, z, y, x, nb):
    k = 0
    cnt = 0
    for dz in range(-1, 2):
        for dy in range(-1, 2):
            for dx in range(-1, 2):
                v = img[z + dz, y + dy, x + dx]
                nb[k] = v
                if v and k != 13:
                    cnt += 1
                k += 1
    return cnt


@njit(cache=True)
def _thin(img, adj26, adj6, l1):
    nz, ny, nx = img.shape
    dirs = np.array([[-1, 0, 0], [1, 0, 0], [0, -1, 0], [0, 1, 0], [0, 0, -1], [0, 0, 1]], dtype=np.int64)
    nb = np.zeros(27, dtype=np.bool_)
    cand = np.empty((img.size, 3), dtype=np.int64)
    total = 0
    changed = True
    while changed:
        changed = False
        for d in range(6):
            oz, oy, ox = dirs[d, 0], dirs[d, 1], dirs[d, 2]
            nc = 0
            for z in range(1, nz - 1):
                for y in range(1, ny - 1):
                    for x in range(1, nx - 1):
                        if not img[z, y, x] or img[z + oz, y + oy, x + ox]:
                            continue
                        cnt = _gather(img, z, y, x, nb)
                        if cnt <= 1:
                            continue
                        if _simple(nb, adj26, adj6, l1):
                            cand[nc, 0] = z
                            cand[nc, 1] = y
                            cand[nc, 2] = x
                            nc += 1
            for i in range(nc):
                z, y, x = cand[i, 0], cand[i, 1], cand[i, 2]
                cnt = _gather(img, z, y, x, nb)
                if cnt <= 1:
                    continue
                if _simple(nb, adj26, adj6, l1):
                    img[z, y, x] = False
                    total += 1
                    changed = True
    return total


def thin(bits: np.ndarray) -> np.ndarray:
    """Return the thinned copy of a boolean 3D array (outside the grid is background)."""
    img = np.pad(np.asarray(bits, dtype=np.bool_), 1, mode="constant", constant_values=False)
    _thin(img, _ADJ26, _ADJ6, _L1)
    return img[1:-1, 1:-1, 1:-1].copy()


def is_simple_point(neighbourhood: np.ndarray) -> bool:
    """Simple-point test on a 3x3x3 boolean neighbourhood (centre ignored)."""
    nb = np.asarray(neighbourhood, dtype=np.bool_).reshape(27)
    return bool(_simple(nb, _ADJ26, _ADJ6, _L1))
