"""Intensity windowing, skull stripping and brain extraction.

The chain is: clamp intensities to the working window, remove the skull
(everything saturating at the window top, with small gaps closed), keep the
largest remaining connected component, and erode its boundary once. What is
left is the brain voxel set the segmentation models operate on.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import ConfigError, DataError, InternalError
from .morphology import StructuringElement, ball, closing, erode, largest_component
from .volume import LabelMask, Volume3D, count_nonzero


@dataclass(frozen=True)
class WindowBounds:
    """Working intensity window [min_hu, max_hu] in Hounsfield units."""

    min_hu: float = 0.0
    max_hu: float = 100.0

    def __post_init__(self):
        if not self.min_hu < self.max_hu:
            raise ConfigError(f"window requires min < max, got [{self.min_hu}, {self.max_hu}]")


@dataclass(frozen=True, eq=False)
class BrainExtract:
    """A windowed volume together with its brain voxel set.

    volume has every non-brain voxel forced to the window minimum; n_bv is
    the brain voxel count and is always positive.
    """

    volume: Volume3D
    brain_mask: LabelMask
    n_bv: int = field(init=False)

    def __post_init__(self):
        if self.volume.dims != self.brain_mask.dims:
            raise InternalError("brain mask dims do not match the volume")
        n_bv = count_nonzero(self.brain_mask)
        if n_bv == 0:
            raise DataError("no brain found: empty brain mask")
        object.__setattr__(self, "n_bv", n_bv)


def window(vol: Volume3D, bounds: WindowBounds) -> Volume3D:
    """Clamp intensities into [min_hu, max_hu]."""
    data = np.clip(vol.data, bounds.min_hu, bounds.max_hu)
    return Volume3D(data, vol.spacing)


def strip_skull(vol: Volume3D, bounds: WindowBounds,
                close_se: StructuringElement) -> tuple[Volume3D, LabelMask]:
    """Blank out bone from a windowed volume.

    Bone saturates at the window top, so the removal mask is every voxel at
    max_hu, closed to bridge small gaps (thin fractures, partial-volume
    pinholes). The union with the raw seed keeps saturated voxels in the
    removal mask even right at the volume border, where plain closing can
    drop them. Removed voxels are set to min_hu. Returns the stripped
    volume and the removal mask.
    """
    seed = LabelMask(vol.data >= bounds.max_hu)
    removal = LabelMask(seed.binary() | closing(seed, close_se).binary())
    data = np.where(removal.binary(), np.float32(bounds.min_hu), vol.data)
    return Volume3D(data, vol.spacing), removal


def extract_brain(vol: Volume3D, bounds: WindowBounds, erode_se: StructuringElement,
                  connectivity: int = 26) -> BrainExtract:
    """Pick the brain out of a skull-stripped volume.

    Foreground is everything above the window minimum; the largest connected
    component is taken as the head contents and eroded once to shed
    partial-volume rind at its boundary. Raises DataError when nothing
    remains ("no brain found").
    """
    fg = LabelMask(vol.data > bounds.min_hu)
    if count_nonzero(fg) == 0:
        raise DataError("no brain found: volume is empty after windowing and skull removal")
    brain = erode(largest_component(fg, connectivity), erode_se)
    if count_nonzero(brain) == 0:
        raise DataError("no brain found: largest component vanished under erosion")
    data = np.where(brain.binary(), vol.data, np.float32(bounds.min_hu))
    return BrainExtract(volume=Volume3D(data, vol.spacing), brain_mask=brain)


@dataclass(frozen=True)
class PreprocessConfig:
    window: WindowBounds = WindowBounds()
    skull_close_radius: int = 2
    brain_erode_radius: int = 1
    connectivity: int = 26

    def __post_init__(self):
        if self.skull_close_radius < 1 or self.brain_erode_radius < 1:
            raise ConfigError("morphology radii must be >= 1")
        if self.connectivity not in (6, 26):
            raise ConfigError(f"connectivity must be 6 or 26, got {self.connectivity}")


def preprocess_pipeline(vol: Volume3D, config: PreprocessConfig = PreprocessConfig()) -> BrainExtract:
    """window -> strip_skull -> extract_brain with the configured radii."""
    windowed = window(vol, config.window)
    stripped, _removal = strip_skull(vol=windowed, bounds=config.window,
                                     close_se=ball(config.skull_close_radius))
    return extract_brain(stripped, config.window, ball(config.brain_erode_radius),
                         config.connectivity)


class BrainExtractor(TransformerMixin, BaseEstimator):
    """Transformer wrapping the preprocessing chain.

    transform(volume) returns a BrainExtract; fit is stateless and only
    validates the parameters.
    """

    def __init__(self, window_min=0.0, window_max=100.0, skull_close_radius=2,
                 brain_erode_radius=1, connectivity=26):
        self.window_min = window_min
        self.window_max = window_max
        self.skull_close_radius = skull_close_radius
        self.brain_erode_radius = brain_erode_radius
        self.connectivity = connectivity

    def _config(self) -> PreprocessConfig:
        return PreprocessConfig(
            window=WindowBounds(self.window_min, self.window_max),
            skull_close_radius=self.skull_close_radius,
            brain_erode_radius=self.brain_erode_radius,
            connectivity=self.connectivity,
        )

    def fit(self, X: Volume3D, y=None):
        self._config()
        return self

    def transform(self, X: Volume3D) -> BrainExtract:
        return preprocess_pipeline(X, self._config())
