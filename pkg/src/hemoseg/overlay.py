"""Per-slice PPM overlays of a segmentation against truth.

Each axial slice becomes a binary PPM (P6): the windowed volume as the
grayscale base, with agreement voxels in green, missed truth in red and
spurious prediction in blue.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .preprocess import WindowBounds
from .volume import LabelMask, Volume3D, check_same_dims

GREEN = (0, 200, 0)
RED = (220, 0, 0)
BLUE = (0, 80, 255)


def write_ppm(path, rgb: np.ndarray) -> None:
    """Write an (nx, ny, 3) uint8 image; x maps to columns, y to rows."""
    nx, ny, _ = rgb.shape
    rows = np.transpose(rgb, (1, 0, 2))  # row-major: y rows of x pixels
    with open(path, "wb") as fh:
        fh.write(f"P6\n{nx} {ny}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(rows, dtype=np.uint8).tobytes())


def overlay_slices(volume: Volume3D, pred: LabelMask, truth: LabelMask | None,
                   out_dir, bounds: WindowBounds = WindowBounds()) -> list[Path]:
    """Write one PPM per axial slice; returns the paths in z order.

    Without a truth mask the prediction is shown as agreement (green).
    """
    check_same_dims(volume, pred, "volume and prediction")
    if truth is None:
        truth = pred
    check_same_dims(volume, truth, "volume and truth")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    span = bounds.max_hu - bounds.min_hu
    gray = np.clip((volume.data - bounds.min_hu) / span, 0.0, 1.0)
    gray = (gray * 255).astype(np.uint8)
    p = pred.binary()
    t = truth.binary()

    paths = []
    for z in range(volume.dims[2]):
        rgb = np.repeat(gray[:, :, z, None], 3, axis=2)
        rgb[p[:, :, z] & t[:, :, z]] = GREEN
        rgb[t[:, :, z] & ~p[:, :, z]] = RED
        rgb[p[:, :, z] & ~t[:, :, z]] = BLUE
        path = out_dir / f"slice_{z:04d}.ppm"
        write_ppm(path, rgb)
        paths.append(path)
    return paths
