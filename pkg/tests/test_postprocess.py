import numpy as np
import pytest

from hemoseg.errors import InternalError
from hemoseg.mixture import fit_mixture
from hemoseg.morphology import ball
from hemoseg.postprocess import (
    SegmentationResult, cluster_map, fill_holes, finalize, hard_label,
)
from hemoseg.metrics import dice
from hemoseg.preprocess import PreprocessConfig, preprocess_pipeline
from hemoseg.volume import LabelMask

from conftest import make_brain


def gamma_rows(brain, rows):
    """Row-per-voxel matrix built from a dict {voxel_row: gamma_tuple}."""
    width = len(next(iter(rows.values())))
    gamma = np.zeros((brain.n_bv, width))
    gamma[:, 0] = 1.0
    for r, g in rows.items():
        gamma[r] = g
    return gamma


def test_hard_label_summation_rule():
    brain = make_brain(dims=(6, 6, 6), noise=0.0)
    g = gamma_rows(brain, {0: (0.4, 0.35, 0.25),   # summed hemorrhage wins
                           1: (1.0, 0.0, 0.0),
                           2: (0.5, 0.5, 0.0)})    # tie stays healthy
    mask = hard_label(g, brain)
    flat = np.flatnonzero(brain.brain_mask.data.ravel(order="F"))
    labeled = set(np.flatnonzero(mask.data.ravel(order="F")).tolist())
    assert labeled == {int(flat[0])}


def test_hard_label_ignores_monotone_rescale():
    brain = make_brain(dims=(6, 6, 6))
    rng = np.random.default_rng(0)
    gamma = rng.uniform(size=(brain.n_bv, 3))
    gamma /= gamma.sum(axis=1, keepdims=True)
    a = hard_label(gamma, brain)
    b = hard_label(gamma * 7.5, brain)   # unnormalized rows, same ordering
    assert np.array_equal(a.data, b.data)


def test_hard_label_shape_check():
    brain = make_brain(dims=(6, 6, 6))
    with pytest.raises(InternalError):
        hard_label(np.ones((3, 1)), brain)


def test_cluster_map_picks_winning_cluster():
    brain = make_brain(dims=(6, 6, 6))
    g = gamma_rows(brain, {0: (0.2, 0.7, 0.1),
                           1: (0.2, 0.1, 0.7),
                           2: (0.4, 0.35, 0.25),
                           3: (0.6, 0.3, 0.1)})   # healthy wins -> 0
    cm = cluster_map(g, brain)
    flat = np.flatnonzero(brain.brain_mask.data.ravel(order="F"))
    vals = cm.data.ravel(order="F")
    assert vals[flat[0]] == 1
    assert vals[flat[1]] == 2
    assert vals[flat[2]] == 1   # argmax among hemorrhage clusters
    assert vals[flat[3]] == 0


def test_cluster_map_healthy_only():
    brain = make_brain(dims=(6, 6, 6))
    cm = cluster_map(np.ones((brain.n_bv, 1)), brain)
    assert not cm.binary().any()


def test_fill_holes_closes_small_hole_keeps_gap():
    blob = np.zeros((9, 9, 9), dtype=bool)
    blob[2:7, 2:7, 2:7] = True
    blob[4, 4, 4] = False
    filled = fill_holes(LabelMask(blob), ball(1))
    assert filled.binary()[4, 4, 4]

    gap = np.zeros((9, 15, 9), dtype=bool)
    gap[2:7, 2:5, 2:7] = True
    gap[2:7, 10:13, 2:7] = True   # 5-voxel-wide gap
    out = fill_holes(LabelMask(gap), ball(1))
    assert not out.binary()[4, 6:9, 4].any()


def test_fill_holes_extensive():
    rng = np.random.default_rng(1)
    mask = LabelMask(rng.uniform(size=(8, 8, 8)) < 0.3)
    out = fill_holes(mask, ball(1))
    assert (out.binary() | mask.binary()).sum() == out.binary().sum()
    assert not fill_holes(LabelMask(np.zeros((5, 5, 5), bool)),
                          ball(1)).binary().any()


def test_finalize_clips_to_brain_and_fills():
    # 5^3 hemorrhage region with two cavities: (3,3,3) is a brain voxel the
    # model left healthy, (5,5,5) is a hole in the brain mask itself; closing
    # fills both, the clip must then drop the non-brain one
    from hemoseg.preprocess import BrainExtract
    from hemoseg.volume import Volume3D

    data = np.zeros((12, 12, 12), dtype=np.float32)
    mask = np.zeros((12, 12, 12), dtype=bool)
    mask[1:11, 1:11, 1:11] = True
    mask[5, 5, 5] = False
    data[mask] = 30.0
    data[2:7, 2:7, 2:7] = 70.0
    data[~mask] = 0.0
    brain = BrainExtract(volume=Volume3D(data=data, spacing=(1, 1, 1)),
                         brain_mask=LabelMask(mask))

    flat = np.flatnonzero(mask.ravel(order="F"))
    ints = data.ravel(order="F")[flat]
    gamma = np.zeros((brain.n_bv, 2))
    gamma[:, 0] = 1.0
    gamma[ints == 70.0] = (0.1, 0.9)
    carved = 3 + 3 * 12 + 3 * 144
    gamma[np.searchsorted(flat, carved)] = (0.9, 0.1)

    hard = hard_label(gamma, brain)
    assert fill_holes(hard, ball(1)).binary()[5, 5, 5]   # clip is binding

    result = finalize(gamma, None, brain)
    got = result.hemorrhage_mask.binary()
    assert got[3, 3, 3]                      # interior hole filled
    assert not got[5, 5, 5]                  # non-brain cavity clipped away
    assert not got[~mask].any()
    assert not result.cluster_map.binary()[3, 3, 3]  # raw map keeps the hole

    raw = finalize(gamma, None, brain, fill_se=None)
    assert not raw.hemorrhage_mask.binary()[3, 3, 3]


def test_finalize_healthy_is_empty():
    brain = make_brain(dims=(8, 8, 8))
    result = finalize(np.ones((brain.n_bv, 1)), None, brain)
    assert not result.hemorrhage_mask.binary().any()
    assert not result.cluster_map.binary().any()


def test_finalize_after_fit_matches_truth(one_blob_phantom):
    brain = preprocess_pipeline(one_blob_phantom.volume, PreprocessConfig())
    state, resp = fit_mixture(brain)
    result = finalize(resp, state, brain)
    assert dice(result.hemorrhage_mask, one_blob_phantom.truth) >= 0.9
    assert result.state is state
    inside = brain.brain_mask.binary()
    assert not result.hemorrhage_mask.binary()[~inside].any()


def test_segmentation_result_dims_check():
    a = LabelMask(np.zeros((4, 4, 4), bool))
    b = LabelMask(np.zeros((4, 4, 5), bool))
    with pytest.raises(InternalError):
        SegmentationResult(hemorrhage_mask=a, cluster_map=b)
