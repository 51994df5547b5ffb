"""Core 3D volume containers and voxel indexing.

Axis order is (x, y, z) everywhere: arrays have shape ``(nx, ny, nz)``
and linear voxel indices run x-fastest, i.e. ``index = i + j*nx + k*nx*ny``
(the Fortran ravel order, which is also how the on-disk formats lay out
their payloads).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DataError


class VoxelCoord(NamedTuple):
    """Integer voxel coordinate (i, j, k)."""

    i: int
    j: int
    k: int

    def physical(self, spacing: tuple[float, float, float]) -> tuple[float, float, float]:
        """Physical position in mm for the given voxel spacing."""
        return (self.i * spacing[0], self.j * spacing[1], self.k * spacing[2])


def index_of(coord, dims) -> int:
    """Linear index of a voxel coordinate, x-fastest.

    ``index = i + j*nx + k*nx*ny``; raises DataError if out of bounds.
    """
    i, j, k = coord
    nx, ny, nz = dims
    if not (0 <= i < nx and 0 <= j < ny and 0 <= k < nz):
        raise DataError(f"voxel {coord!r} out of bounds for dims {tuple(dims)!r}")
    return int(i + j * nx + k * nx * ny)


def coord_of(index: int, dims) -> VoxelCoord:
    """Inverse of index_of."""
    nx, ny, nz = dims
    n = nx * ny * nz
    if not 0 <= index < n:
        raise DataError(f"linear index {index} out of bounds for dims {tuple(dims)!r}")
    i = index % nx
    j = (index // nx) % ny
    k = index // (nx * ny)
    return VoxelCoord(int(i), int(j), int(k))


def _check_dims3(shape, what: str) -> None:
    if len(shape) != 3 or any(int(s) < 1 for s in shape):
        raise DataError(f"{what} must be 3-dimensional with positive dims, got {tuple(shape)!r}")


@dataclass(frozen=True, eq=False)
class Volume3D:
    """A scalar 3D image: float32 voxel data plus physical spacing.

    Attributes
    ----------
    data : np.ndarray
        Shape (nx, ny, nz), float32, all values finite.
    spacing : tuple of float
        Voxel size (sx, sy, sz) in mm, all positive.
    """

    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        _check_dims3(data.shape, "volume data")
        if not np.all(np.isfinite(data)):
            raise DataError("volume contains non-finite intensities")
        spacing = tuple(float(s) for s in self.spacing)
        if len(spacing) != 3 or any(not np.isfinite(s) or s <= 0 for s in spacing):
            raise DataError(f"spacing must be three positive numbers, got {self.spacing!r}")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "spacing", spacing)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def n_voxels(self) -> int:
        return int(self.data.size)


@dataclass(frozen=True, eq=False)
class LabelMask:
    """Integer label field over a voxel grid; 0 is background.

    Binary masks are the special case with labels in {0, 1}.
    """

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        _check_dims3(data.shape, "mask data")
        if not np.issubdtype(data.dtype, np.integer):
            if np.issubdtype(data.dtype, np.bool_):
                data = data.astype(np.int32)
            else:
                raise DataError(f"mask labels must be integers, got dtype {data.dtype}")
        if data.size and int(data.min()) < 0:
            raise DataError("mask labels must be non-negative")
        object.__setattr__(self, "data", np.ascontiguousarray(data, dtype=np.int32))

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape

    def binary(self) -> np.ndarray:
        """Boolean foreground array (label != 0)."""
        return self.data != 0


def count_nonzero(mask: LabelMask) -> int:
    """Number of foreground voxels in the mask."""
    return int(np.count_nonzero(mask.data))


def linear_indices(mask: LabelMask) -> np.ndarray:
    """Ascending x-fastest linear indices of the mask's foreground voxels."""
    return np.flatnonzero(mask.data.ravel(order="F"))


def coords_of_indices(indices: np.ndarray, dims) -> np.ndarray:
    """(n, 3) integer coordinates for an array of linear indices."""
    i, j, k = np.unravel_index(np.asarray(indices, dtype=np.int64), dims, order="F")
    return np.stack([i, j, k], axis=1)


def mask_from_linear(dims, indices, labels=None) -> LabelMask:
    """Mask with the given labels (default 1) at x-fastest linear indices."""
    flat = np.zeros(int(np.prod(dims)), dtype=np.int32)
    flat[np.asarray(indices, dtype=np.int64)] = 1 if labels is None else labels
    return LabelMask(flat.reshape(dims, order="F"))


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned, inclusive box on a single z slice.

    min_corner/max_corner share the slice's z index; tag carries a free-form
    category label (e.g. a lesion type) used when grouping metrics.
    """

    min_corner: VoxelCoord
    max_corner: VoxelCoord
    slice_index: int
    tag: str = ""

    def __post_init__(self):
        lo, hi = self.min_corner, self.max_corner
        if lo.i > hi.i or lo.j > hi.j:
            raise DataError(f"box corners out of order: {lo} > {hi}")
        if lo.k != self.slice_index or hi.k != self.slice_index:
            raise DataError("box corners must lie on slice_index")

    @property
    def n_voxels(self) -> int:
        lo, hi = self.min_corner, self.max_corner
        return (hi.i - lo.i + 1) * (hi.j - lo.j + 1)

    def contains(self, coord) -> bool:
        i, j, k = coord
        lo, hi = self.min_corner, self.max_corner
        return k == self.slice_index and lo.i <= i <= hi.i and lo.j <= j <= hi.j


def box_from_slice_coords(xs, ys, z: int, tag: str = "") -> BoundingBox:
    """Tight box around in-slice coordinate arrays."""
    z = int(z)
    return BoundingBox(
        min_corner=VoxelCoord(int(np.min(xs)), int(np.min(ys)), z),
        max_corner=VoxelCoord(int(np.max(xs)), int(np.max(ys)), z),
        slice_index=z,
        tag=tag,
    )


def check_same_dims(a, b, what: str = "inputs") -> None:
    """Raise DataError unless two volume/mask objects share grid dims."""
    if tuple(a.dims) != tuple(b.dims):
        raise DataError(f"{what} have mismatched dims: {tuple(a.dims)} vs {tuple(b.dims)}")
