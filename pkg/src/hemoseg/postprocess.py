"""From soft responsibilities to a final hemorrhage mask."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InternalError
from .mixture import MixtureState, Responsibilities
from .morphology import StructuringElement, ball, closing
from .preprocess import BrainExtract
from .volume import LabelMask, mask_from_linear


@dataclass(frozen=True, eq=False)
class SegmentationResult:
    """Binary hemorrhage mask plus the per-voxel cluster assignment.

    cluster_map holds the raw winning-cluster index per voxel (0 = healthy
    or outside the brain); the binary mask may additionally contain voxels
    added by hole filling. state is None for algorithms without a mixture
    model; report carries a rendered parameter summary either way.
    """

    hemorrhage_mask: LabelMask
    cluster_map: LabelMask
    state: MixtureState | None = None
    report: str = ""

    def __post_init__(self):
        if self.hemorrhage_mask.dims != self.cluster_map.dims:
            raise InternalError("mask and cluster map dims differ")


def _gamma_of(resp) -> np.ndarray:
    return resp.gamma if isinstance(resp, Responsibilities) else np.asarray(resp, dtype=np.float64)


def hard_label(resp, brain: BrainExtract) -> LabelMask:
    """Binary mask of voxels whose hemorrhage responsibility wins.

    A voxel is hemorrhage when the summed responsibility of clusters 1..
    strictly exceeds the healthy one; ties stay healthy. Only the relative
    order of (healthy, summed hemorrhage) matters, so unnormalized rows
    give the same answer.
    """
    gamma = _gamma_of(resp)
    if gamma.shape[0] != brain.n_bv:
        raise InternalError("responsibilities do not cover the brain voxel set")
    flat = np.flatnonzero(brain.brain_mask.data.ravel(order="F"))
    hem = gamma[:, 1:].sum(axis=1) > gamma[:, 0]
    return mask_from_linear(brain.volume.dims, flat[hem])


def cluster_map(resp, brain: BrainExtract) -> LabelMask:
    """Winning hemorrhage cluster index per voxel (0 elsewhere)."""
    gamma = _gamma_of(resp)
    if gamma.shape[0] != brain.n_bv:
        raise InternalError("responsibilities do not cover the brain voxel set")
    flat = np.flatnonzero(brain.brain_mask.data.ravel(order="F"))
    hem = gamma[:, 1:].sum(axis=1) > gamma[:, 0]
    if gamma.shape[1] == 1 or not hem.any():
        return mask_from_linear(brain.volume.dims, flat[:0])
    winner = gamma[hem, 1:].argmax(axis=1) + 1
    return mask_from_linear(brain.volume.dims, flat[hem], winner.astype(np.int32))


def fill_holes(mask: LabelMask, se: StructuringElement) -> LabelMask:
    """Close small interior gaps; never removes a voxel."""
    return LabelMask(mask.binary() | closing(mask, se).binary())


_DEFAULT_FILL = ball(1)


def finalize(resp, state: MixtureState | None, brain: BrainExtract,
             fill_se: StructuringElement | None = _DEFAULT_FILL) -> SegmentationResult:
    """hard label -> fill holes (None skips it) -> clip to the brain mask."""
    hard = hard_label(resp, brain)
    filled = fill_holes(hard, fill_se) if fill_se is not None else hard
    clipped = LabelMask(filled.binary() & brain.brain_mask.binary())
    return SegmentationResult(
        hemorrhage_mask=clipped,
        cluster_map=cluster_map(resp, brain),
        state=state,
    )
