"""Synthetic head phantoms with exact ground truth.

A phantom is an ellipsoidal brain inside a saturating skull shell on an air
background. Lesion blobs are hard Mahalanobis balls (axis-aligned ellipsoids)
with Gaussian intensities; their exact voxel supports become the truth mask,
and per-slice bounding boxes are derived from it. All randomness comes from
the counter-based generator in :mod:`hemoseg.rng`, keyed by voxel linear
index, so a phantom is fully determined by its spec plus one seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .io import parse_kv
from .volume import BoundingBox, LabelMask, Volume3D, box_from_slice_coords
from . import rng

_STREAM_TISSUE = 1
_STREAM_NOISE = 2
_STREAM_BLOB_BASE = 16


@dataclass(frozen=True)
class BlobSpec:
    """One lesion: an ellipsoidal voxel support with Gaussian intensities.

    The support is either every in-brain voxel with Mahalanobis distance
    <= 1 from the center (semi-axes ``axes``), or, when ``n_voxels`` is
    given, exactly the n in-brain voxels nearest in that metric (ties
    broken by ascending linear index).
    """

    center: tuple[float, float, float]
    intensity_mean: float = 75.0
    intensity_std: float = 5.0
    axes: tuple[float, float, float] = (4.0, 4.0, 4.0)
    n_voxels: int | None = None
    tag: str = "blob"

    def __post_init__(self):
        if len(self.center) != 3:
            raise DataError("blob center must have three coordinates")
        if len(self.axes) != 3 or any(a <= 0 for a in self.axes):
            raise DataError(f"blob axes must be positive, got {self.axes!r}")
        if self.intensity_std < 0:
            raise DataError("blob intensity_std must be >= 0")
        if self.n_voxels is not None and self.n_voxels < 1:
            raise DataError("blob n_voxels must be >= 1")


@dataclass(frozen=True)
class PhantomSpec:
    """Geometry and intensity model of a synthetic head volume."""

    dims: tuple[int, int, int] = (64, 64, 64)
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    brain_axes: tuple[float, float, float] = (24.0, 26.0, 22.0)
    brain_center: tuple[float, float, float] | None = None
    brain_mean: float = 32.0
    brain_std: float = 4.0
    skull_thickness: float = 2.0
    skull_hu: float = 1000.0
    air_hu: float = -1000.0
    noise_std: float = 2.0
    blobs: tuple[BlobSpec, ...] = ()
    seed: int = 0

    def __post_init__(self):
        if len(self.dims) != 3 or any(int(d) < 8 for d in self.dims):
            raise DataError(f"phantom dims must be at least 8 per axis, got {self.dims!r}")
        if any(a <= 0 for a in self.brain_axes):
            raise DataError("brain axes must be positive")
        if self.skull_thickness <= 0:
            raise DataError("skull thickness must be positive")
        if self.brain_std < 0 or self.noise_std < 0:
            raise DataError("noise levels must be >= 0")
        object.__setattr__(self, "blobs", tuple(self.blobs))

    def center(self) -> tuple[float, float, float]:
        if self.brain_center is not None:
            return self.brain_center
        return tuple((d - 1) / 2.0 for d in self.dims)


@dataclass(frozen=True)
class BlobStats:
    """Realized per-blob facts, straight from the generated voxels."""

    label: int
    tag: str
    n_voxels: int
    centroid: tuple[float, float, float]
    intensity_mean: float


@dataclass(frozen=True, eq=False)
class PhantomOutput:
    volume: Volume3D
    truth: LabelMask
    boxes: tuple[BoundingBox, ...]
    blob_stats: tuple[BlobStats, ...] = field(default=())


def _ellipsoid_d2(shape_arrays, center, axes) -> np.ndarray:
    x, y, z = shape_arrays
    return (((x - center[0]) / axes[0]) ** 2
            + ((y - center[1]) / axes[1]) ** 2
            + (((z - center[2]) / axes[2]) ** 2))


def _linear_index_grid(dims) -> np.ndarray:
    nx, ny, nz = dims
    return np.arange(nx * ny * nz, dtype=np.int64).reshape(dims, order="F")


def generate(spec: PhantomSpec) -> PhantomOutput:
    """Render a phantom volume, truth mask, boxes and realized blob stats."""
    dims = tuple(int(d) for d in spec.dims)
    grids = np.indices(dims, dtype=np.float64)
    center = spec.center()

    brain_d2 = _ellipsoid_d2(grids, center, spec.brain_axes)
    brain = brain_d2 <= 1.0
    outer_axes = tuple(a + spec.skull_thickness for a in spec.brain_axes)
    skull = (_ellipsoid_d2(grids, center, outer_axes) <= 1.0) & ~brain
    if not brain.any():
        raise DataError("phantom brain ellipsoid contains no voxels")

    lin = _linear_index_grid(dims)
    data = np.full(dims, spec.air_hu, dtype=np.float64)
    data[skull] = spec.skull_hu
    data[brain] = spec.brain_mean + spec.brain_std * rng.normal_field(
        spec.seed, _STREAM_TISSUE, lin[brain])

    truth = np.zeros(dims, dtype=np.int32)
    stats = []
    for label, blob in enumerate(spec.blobs, start=1):
        cx, cy, cz = blob.center
        if _ellipsoid_d2((np.float64(cx), np.float64(cy), np.float64(cz)),
                         center, spec.brain_axes) > 1.0:
            raise DataError(f"blob {label} center {blob.center} lies outside the brain")
        d2 = _ellipsoid_d2(grids, blob.center, blob.axes)
        if blob.n_voxels is None:
            support = (d2 <= 1.0) & brain
        else:
            cand = np.flatnonzero(brain.ravel(order="F"))
            d2_flat = d2.ravel(order="F")[cand]
            if blob.n_voxels > cand.size:
                raise DataError(f"blob {label} wants {blob.n_voxels} voxels, brain has {cand.size}")
            order = np.lexsort((cand, d2_flat))
            chosen = cand[order[:blob.n_voxels]]
            flat = np.zeros(dims[0] * dims[1] * dims[2], dtype=bool)
            flat[chosen] = True
            support = flat.reshape(dims, order="F")
        if not support.any():
            raise DataError(f"blob {label} has an empty voxel support")
        if (truth[support] != 0).any():
            raise DataError(f"blob {label} overlaps an earlier blob")

        data[support] = blob.intensity_mean + blob.intensity_std * rng.normal_field(
            spec.seed, _STREAM_BLOB_BASE + label, lin[support])
        truth[support] = label
        xs, ys, zs = np.nonzero(support)
        stats.append(BlobStats(
            label=label,
            tag=blob.tag,
            n_voxels=int(support.sum()),
            centroid=(float(xs.mean()), float(ys.mean()), float(zs.mean())),
            intensity_mean=float(data[support].mean()),
        ))

    if spec.noise_std > 0:
        data[brain] += spec.noise_std * rng.normal_field(spec.seed, _STREAM_NOISE, lin[brain])

    truth_mask = LabelMask(truth)
    return PhantomOutput(
        volume=Volume3D(data.astype(np.float32), spec.spacing),
        truth=truth_mask,
        boxes=tuple(boxes_from_truth(truth_mask, tags={s.label: s.tag for s in stats})),
        blob_stats=tuple(stats),
    )


def boxes_from_truth(truth: LabelMask, tags: dict[int, str] | None = None) -> list[BoundingBox]:
    """Tight per-slice boxes around each truth label, ordered (label, z)."""
    boxes = []
    labels = np.unique(truth.data)
    for label in labels[labels > 0]:
        where = truth.data == label
        tag = (tags or {}).get(int(label), f"blob{int(label)}")
        for z in range(truth.dims[2]):
            xs, ys = np.nonzero(where[:, :, z])
            if xs.size:
                boxes.append(box_from_slice_coords(xs, ys, z, tag=tag))
    return boxes


_SCALAR_KEYS = {
    "brain.mean": "brain_mean", "brain.std": "brain_std",
    "skull.thickness": "skull_thickness", "skull.hu": "skull_hu",
    "air.hu": "air_hu", "noise.std": "noise_std",
}


def parse_phantom_spec(text: str, source: str = "<spec>") -> PhantomSpec:
    """Build a PhantomSpec from ``key = value`` text.

    Recognized keys: dims, spacing, brain.axes, brain.center, brain.mean,
    brain.std, skull.thickness, skull.hu, air.hu, noise.std, seed and per-blob
    blob<N>.center / .axes / .voxels / .mean / .std / .tag (N starting at 1).
    """
    kv = parse_kv(text, source=source)
    kwargs: dict = {}
    blob_fields: dict[int, dict] = {}

    def triple(value, conv=float):
        parts = [p.strip() for p in value.split(",")]
        if len(parts) != 3:
            raise DataError(f"{source}: expected three comma-separated values, got {value!r}")
        return tuple(conv(p) for p in parts)

    try:
        for key, value in kv.items():
            if key == "dims":
                kwargs["dims"] = triple(value, int)
            elif key == "spacing":
                kwargs["spacing"] = triple(value)
            elif key == "brain.axes":
                kwargs["brain_axes"] = triple(value)
            elif key == "brain.center":
                kwargs["brain_center"] = triple(value)
            elif key == "seed":
                kwargs["seed"] = int(value)
            elif key in _SCALAR_KEYS:
                kwargs[_SCALAR_KEYS[key]] = float(value)
            elif key.startswith("blob"):
                head, _, attr = key.partition(".")
                if not head[4:].isdigit() or not attr:
                    raise DataError(f"{source}: unrecognized key {key!r}")
                blob_fields.setdefault(int(head[4:]), {})[attr] = value
            else:
                raise DataError(f"{source}: unrecognized key {key!r}")
    except ValueError as exc:
        raise DataError(f"{source}: bad numeric value ({exc})") from exc

    blobs = []
    for n in sorted(blob_fields):
        fields_n = blob_fields[n]
        if "center" not in fields_n:
            raise DataError(f"{source}: blob{n} is missing blob{n}.center")
        try:
            blob = BlobSpec(
                center=triple(fields_n["center"]),
                axes=triple(fields_n["axes"]) if "axes" in fields_n else (4.0, 4.0, 4.0),
                n_voxels=int(fields_n["voxels"]) if "voxels" in fields_n else None,
                intensity_mean=float(fields_n.get("mean", 75.0)),
                intensity_std=float(fields_n.get("std", 5.0)),
                tag=fields_n.get("tag", f"blob{n}"),
            )
        except ValueError as exc:
            raise DataError(f"{source}: bad value for blob{n} ({exc})") from exc
        unknown = set(fields_n) - {"center", "axes", "voxels", "mean", "std", "tag"}
        if unknown:
            raise DataError(f"{source}: unknown blob{n} keys {sorted(unknown)}")
        blobs.append(blob)
    kwargs["blobs"] = tuple(blobs)
    return PhantomSpec(**kwargs)
