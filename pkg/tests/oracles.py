"""Brute-force reference implementations used to check the real ones.

Everything here is written from the set-theoretic definitions with plain
loops over offsets / voxels. Deliberately slow and independent of the
package internals (no scipy, no shared helpers).
"""

from __future__ import annotations

import numpy as np


def erode_bf(mask: np.ndarray, offsets) -> np.ndarray:
    """Voxel kept iff every structuring-element translate lands in foreground."""
    m = mask.astype(bool)
    out = np.ones_like(m)
    for (di, dj, dk) in offsets:
        shifted = np.zeros_like(m)
        src = _shift_slices(m.shape, di, dj, dk)
        dst = _shift_slices(m.shape, -di, -dj, -dk)
        shifted[dst] = m[src]
        out &= shifted
    return out


def dilate_bf(mask: np.ndarray, offsets) -> np.ndarray:
    m = mask.astype(bool)
    out = np.zeros_like(m)
    for (di, dj, dk) in offsets:
        shifted = np.zeros_like(m)
        src = _shift_slices(m.shape, di, dj, dk)
        dst = _shift_slices(m.shape, -di, -dj, -dk)
        shifted[dst] = m[src]
        out |= shifted
    return out


def _shift_slices(shape, di, dj, dk):
    sl = []
    for d, n in zip((di, dj, dk), shape):
        if d >= 0:
            sl.append(slice(d, n))
        else:
            sl.append(slice(0, n + d))
    return tuple(sl)


def close_bf(mask, offsets):
    return erode_bf(dilate_bf(mask, offsets), offsets)


def open_bf(mask, offsets):
    return dilate_bf(erode_bf(mask, offsets), offsets)


NEIGHBORS_6 = [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)]
NEIGHBORS_26 = [(di, dj, dk)
                for di in (-1, 0, 1) for dj in (-1, 0, 1) for dk in (-1, 0, 1)
                if (di, dj, dk) != (0, 0, 0)]


def components_bf(mask: np.ndarray, connectivity: int):
    """Flood-fill labeling; returns (labels, sizes) with the package's
    ordering contract: labels 1..K by descending size, ties broken by the
    smaller first x-fastest linear index."""
    m = mask.astype(bool)
    nx, ny, nz = m.shape
    neighbors = NEIGHBORS_6 if connectivity == 6 else NEIGHBORS_26
    comp = np.zeros(m.shape, dtype=np.int32)
    comps = []
    for k in range(nz):
        for j in range(ny):
            for i in range(nx):
                if not m[i, j, k] or comp[i, j, k]:
                    continue
                stack = [(i, j, k)]
                comp[i, j, k] = -1
                voxels = []
                while stack:
                    (ci, cj, ck) = stack.pop()
                    voxels.append((ci, cj, ck))
                    for (di, dj, dk) in neighbors:
                        ni, nj, nk = ci + di, cj + dj, ck + dk
                        if 0 <= ni < nx and 0 <= nj < ny and 0 <= nk < nz \
                                and m[ni, nj, nk] and not comp[ni, nj, nk]:
                            comp[ni, nj, nk] = -1
                            stack.append((ni, nj, nk))
                first = min(ci + cj * nx + ck * nx * ny for (ci, cj, ck) in voxels)
                comps.append((len(voxels), first, voxels))
    comps.sort(key=lambda t: (-t[0], t[1]))
    labels = np.zeros(m.shape, dtype=np.int32)
    sizes = []
    for lbl, (n, _first, voxels) in enumerate(comps, start=1):
        sizes.append(n)
        for (ci, cj, ck) in voxels:
            labels[ci, cj, ck] = lbl
    return labels, tuple(sizes)


def dice_bf(x: np.ndarray, y: np.ndarray) -> float:
    xs = {tuple(c) for c in np.argwhere(x.astype(bool))}
    ys = {tuple(c) for c in np.argwhere(y.astype(bool))}
    if not xs and not ys:
        return 1.0
    if not xs or not ys:
        return 0.0
    return 2.0 * len(xs & ys) / (len(xs) + len(ys))


def random_masks(rng: np.random.Generator, n: int, dims, p=None):
    for _ in range(n):
        fill = rng.uniform(0.15, 0.75) if p is None else p
        yield rng.random(dims) < fill
