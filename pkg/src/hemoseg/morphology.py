"""Binary 3-D morphology and connected components.

All operators treat everything outside the volume as background, and all
structuring elements contain the origin and are point-symmetric. Composite
operators (closing, opening) are built from our own erode/dilate so the
border convention stays the clip-to-background one throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import ConfigError, InternalError
from .volume import LabelMask


@dataclass(frozen=True, eq=False)
class StructuringElement:
    """A symmetric neighborhood around the origin.

    Attributes
    ----------
    name : str
        Human-readable family name ("ball-2", "cross-6", "cube-26").
    offsets : np.ndarray
        (n, 3) integer offsets, always including (0, 0, 0).
    """

    name: str
    offsets: np.ndarray

    def __post_init__(self):
        offsets = np.asarray(self.offsets, dtype=np.int64)
        if offsets.ndim != 2 or offsets.shape[1] != 3:
            raise ConfigError("structuring element offsets must be (n, 3)")
        rows = {tuple(o) for o in offsets.tolist()}
        if (0, 0, 0) not in rows:
            raise InternalError(f"structuring element {self.name} lacks the origin")
        for o in rows:
            if (-o[0], -o[1], -o[2]) not in rows:
                raise InternalError(f"structuring element {self.name} is not symmetric")
        object.__setattr__(self, "offsets", offsets)

    @property
    def radius(self) -> int:
        return int(np.abs(self.offsets).max())

    def as_array(self) -> np.ndarray:
        """Dense boolean footprint of shape (2r+1, 2r+1, 2r+1), origin centered."""
        r = self.radius
        arr = np.zeros((2 * r + 1,) * 3, dtype=bool)
        idx = self.offsets + r
        arr[idx[:, 0], idx[:, 1], idx[:, 2]] = True
        return arr


def ball(radius: int) -> StructuringElement:
    """Euclidean ball: offsets with i^2 + j^2 + k^2 <= radius^2."""
    r = int(radius)
    if r < 1:
        raise ConfigError(f"ball radius must be >= 1, got {radius}")
    grid = np.mgrid[-r:r + 1, -r:r + 1, -r:r + 1].reshape(3, -1).T
    keep = (grid ** 2).sum(axis=1) <= r * r
    return StructuringElement(f"ball-{r}", grid[keep])


def cross() -> StructuringElement:
    """Origin plus the six face neighbors."""
    grid = np.mgrid[-1:2, -1:2, -1:2].reshape(3, -1).T
    keep = np.abs(grid).sum(axis=1) <= 1
    return StructuringElement("cross-6", grid[keep])


def cube() -> StructuringElement:
    """Full 3x3x3 neighborhood (origin plus 26 neighbors)."""
    grid = np.mgrid[-1:2, -1:2, -1:2].reshape(3, -1).T
    return StructuringElement("cube-26", grid)


def _as_bool(mask: LabelMask) -> np.ndarray:
    return mask.binary()


def erode(mask: LabelMask, se: StructuringElement) -> LabelMask:
    """Voxels whose whole se-neighborhood is foreground (border = background)."""
    out = ndimage.binary_erosion(_as_bool(mask), structure=se.as_array(), border_value=0)
    return LabelMask(out)


def dilate(mask: LabelMask, se: StructuringElement) -> LabelMask:
    """Union of the se footprint translated to every foreground voxel."""
    out = ndimage.binary_dilation(_as_bool(mask), structure=se.as_array(), border_value=0)
    return LabelMask(out)


def closing(mask: LabelMask, se: StructuringElement) -> LabelMask:
    """Dilate then erode: bridges gaps up to the se scale."""
    return erode(dilate(mask, se), se)


def opening(mask: LabelMask, se: StructuringElement) -> LabelMask:
    """Erode then dilate: removes specks below the se scale."""
    return dilate(erode(mask, se), se)


_CONNECTIVITY_STRUCTS = {
    6: ndimage.generate_binary_structure(3, 1),
    26: ndimage.generate_binary_structure(3, 3),
}


@dataclass(frozen=True, eq=False)
class ComponentLabeling:
    """Connected components, labeled 1..n by decreasing size.

    Size ties are broken toward the component containing the smallest
    x-fastest linear index. sizes[l-1] is the voxel count of label l.
    """

    labels: LabelMask
    sizes: np.ndarray
    connectivity: int

    n_components: int = field(init=False)

    def __post_init__(self):
        sizes = np.asarray(self.sizes, dtype=np.int64)
        if np.any(np.diff(sizes) > 0):
            raise InternalError("component sizes must be non-increasing")
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "n_components", int(len(sizes)))

    def component(self, label: int) -> LabelMask:
        """Binary mask of one component."""
        if not 1 <= label <= self.n_components:
            raise ConfigError(f"component label {label} out of range 1..{self.n_components}")
        return LabelMask(self.labels.data == label)


def connected_components(mask: LabelMask, connectivity: int = 26) -> ComponentLabeling:
    """Label foreground components under 6- or 26-connectivity."""
    if connectivity not in _CONNECTIVITY_STRUCTS:
        raise ConfigError(f"connectivity must be 6 or 26, got {connectivity}")
    raw, n = ndimage.label(_as_bool(mask), structure=_CONNECTIVITY_STRUCTS[connectivity])
    if n == 0:
        return ComponentLabeling(LabelMask(raw), np.zeros(0, dtype=np.int64), connectivity)

    flat = raw.ravel(order="F")
    sizes = np.bincount(flat, minlength=n + 1)[1:]
    # first occurrence in x-fastest order = smallest linear index per label
    labels_seen, first_idx = np.unique(flat, return_index=True)
    first = np.zeros(n + 1, dtype=np.int64)
    first[labels_seen] = first_idx
    order = sorted(range(1, n + 1), key=lambda lab: (-int(sizes[lab - 1]), int(first[lab])))

    remap = np.zeros(n + 1, dtype=np.int32)
    for new_label, old_label in enumerate(order, start=1):
        remap[old_label] = new_label
    return ComponentLabeling(
        labels=LabelMask(remap[raw]),
        sizes=sizes[np.asarray(order) - 1],
        connectivity=connectivity,
    )


def largest_component(mask: LabelMask, connectivity: int = 26) -> LabelMask:
    """Binary mask of the largest component; empty in, empty out."""
    labeling = connected_components(mask, connectivity)
    if labeling.n_components == 0:
        return LabelMask(np.zeros(mask.dims, dtype=np.int32))
    return labeling.component(1)
