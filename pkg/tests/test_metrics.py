import numpy as np
import pytest

from hemoseg.errors import DataError
from hemoseg.metrics import (
    EvalReport, detection_rate, dice, evaluate, load_boxes, render_report,
    render_summary, save_boxes, summarize,
)
from hemoseg.volume import BoundingBox, LabelMask, Volume3D, VoxelCoord

from oracles import dice_bf, random_masks


def mask_of(points, dims=(8, 8, 8)):
    data = np.zeros(dims, dtype=bool)
    for p in points:
        data[p] = True
    return LabelMask(data)


def box(z, x0, y0, x1, y1, tag=""):
    return BoundingBox(VoxelCoord(x0, y0, z), VoxelCoord(x1, y1, z),
                       slice_index=z, tag=tag)


# --- dice -----------------------------------------------------------------

def test_dice_worked_example():
    x = mask_of([(0, 0, 0), (1, 0, 0), (2, 0, 0), (3, 0, 0)])
    y = mask_of([(1, 0, 0), (2, 0, 0), (3, 0, 0), (4, 0, 0), (5, 0, 0), (6, 0, 0)])
    assert dice(x, y) == pytest.approx(0.6)   # 2*3 / (4+6)


def test_dice_edge_cases():
    x = mask_of([(1, 1, 1), (2, 2, 2)])
    y = mask_of([(4, 4, 4)])
    empty = mask_of([])
    assert dice(x, x) == 1.0
    assert dice(x, y) == 0.0
    assert dice(x, y) == dice(y, x)
    assert dice(empty, empty) == 1.0
    assert dice(x, empty) == 0.0
    assert dice(empty, x) == 0.0


def test_dice_matches_oracle():
    rng = np.random.default_rng(13)
    for a, b in zip(random_masks(rng, 40, (6, 7, 5)),
                    random_masks(rng, 40, (6, 7, 5))):
        assert dice(LabelMask(a), LabelMask(b)) == \
               pytest.approx(dice_bf(a, b), abs=1e-12)


def test_dice_dim_mismatch():
    with pytest.raises(DataError):
        dice(mask_of([], dims=(4, 4, 4)), mask_of([], dims=(4, 4, 5)))


# --- detection_rate -------------------------------------------------------

def test_detection_simple_rates():
    pred = mask_of([(2, 2, 1), (3, 3, 1)])
    covered = box(1, 1, 1, 4, 4)
    missed = box(5, 1, 1, 4, 4)
    assert detection_rate(pred, [covered]).rate == 1.0
    assert detection_rate(mask_of([]), [covered]).rate == 0.0
    report = detection_rate(pred, [covered, missed])
    assert report.rate == 0.5
    assert report.n_boxes == 2 and report.n_detected == 1
    assert [o.detected for o in report.outcomes] == [True, False]


def test_detection_min_overlap():
    pred = mask_of([(2, 2, 1), (3, 3, 1)])
    b = box(1, 1, 1, 4, 4)
    assert detection_rate(pred, [b], min_overlap_voxels=2).rate == 1.0
    assert detection_rate(pred, [b], min_overlap_voxels=3).rate == 0.0
    with pytest.raises(DataError):
        detection_rate(pred, [b], min_overlap_voxels=0)


def test_detection_monotone_in_prediction():
    rng = np.random.default_rng(7)
    boxes = [box(2, 0, 0, 5, 5), box(4, 2, 2, 7, 7), box(6, 1, 3, 3, 6)]
    base = LabelMask(next(random_masks(rng, 1, (8, 8, 8), p=0.05)))
    more = LabelMask(base.binary() | next(random_masks(rng, 1, (8, 8, 8), p=0.1)))
    r0 = detection_rate(base, boxes, min_overlap_voxels=2)
    r1 = detection_rate(more, boxes, min_overlap_voxels=2)
    assert r1.rate >= r0.rate
    for s0, s1 in zip(r0.by_size, r1.by_size):
        assert s1.rate >= s0.rate


def test_detection_bins():
    pred = mask_of([(1, 1, 0), (1, 1, 2)], dims=(12, 12, 4))
    small = box(0, 1, 1, 2, 2)          # 4 voxels  -> [0,100)
    large = box(2, 0, 0, 10, 10)        # 121 voxels -> [100,500)
    vol_data = np.full((12, 12, 4), 30.0, dtype=np.float32)
    vol_data[1, 1, 0] = 70.0            # small box peak -> [60,80)
    vol_data[5, 5, 2] = 95.0            # large box peak -> [80,inf)
    vol = Volume3D(data=vol_data, spacing=(1, 1, 1))
    report = detection_rate(pred, [small, large], volume=vol)
    assert {(s.label, s.detected, s.total) for s in report.by_size} == \
           {("[0,100)", 1, 1), ("[100,500)", 1, 1)}
    assert {(s.label, s.detected, s.total) for s in report.by_intensity} == \
           {("[60,80)", 1, 1), ("[80,inf)", 1, 1)}
    assert report.outcomes[0].max_intensity == 70.0


def test_detection_out_of_bounds_box():
    pred = mask_of([], dims=(6, 6, 6))
    with pytest.raises(DataError, match="exceeds"):
        detection_rate(pred, [box(1, 0, 0, 6, 3)])
    with pytest.raises(DataError, match="exceeds"):
        detection_rate(pred, [box(6, 0, 0, 3, 3)])


# --- evaluate / summarize -------------------------------------------------

def test_evaluate_combines():
    pred = mask_of([(2, 2, 1)])
    truth = mask_of([(2, 2, 1), (3, 3, 1)])
    report = evaluate(pred, truth, boxes=[box(1, 1, 1, 4, 4, tag="deep")])
    assert report.dice == pytest.approx(2 / 3)
    assert report.detection.rate == 1.0
    assert report.tags == ("deep",)
    assert evaluate(pred, truth).detection is None


def test_summarize_worked_example():
    rows = summarize([EvalReport(dice=0.2), EvalReport(dice=0.4)])
    assert len(rows) == 1
    all_row = rows[0]
    assert all_row.group == "all" and all_row.n == 2
    assert all_row.mean == pytest.approx(0.3)
    assert all_row.max == pytest.approx(0.4)
    assert all_row.std == pytest.approx(0.1)


def test_summarize_groups_by_tag():
    reports = [EvalReport(dice=0.5, tags=("deep",)),
               EvalReport(dice=0.7, tags=("deep", "lobar")),
               EvalReport(dice=0.9)]
    rows = {r.group: r for r in summarize(reports)}
    assert set(rows) == {"all", "deep", "lobar"}   # empty groups omitted
    assert rows["all"].n == 3
    assert rows["deep"].n == 2
    assert rows["deep"].mean == pytest.approx(0.6)
    assert rows["lobar"].std == 0.0                # single member
    assert summarize([]) == []


# --- rendering and box files ----------------------------------------------

def test_render_report_lines():
    pred = mask_of([(2, 2, 1)])
    truth = mask_of([(2, 2, 1)])
    text = render_report(evaluate(pred, truth, boxes=[box(1, 1, 1, 4, 4, tag="deep")]))
    lines = text.strip().split("\n")
    assert lines[0] == "dice=1.000000"
    assert lines[1] == "boxes=1 detected=1 rate=1.000000"
    assert lines[-1] == "tags=deep"


def test_render_summary_line():
    text = render_summary(summarize([EvalReport(dice=0.2), EvalReport(dice=0.4)]))
    assert text == "group=all n=2 mean=0.300000 max=0.400000 std=0.100000\n"


def test_boxes_round_trip(tmp_path):
    path = tmp_path / "boxes.txt"
    original = [box(3, 1, 2, 4, 5, tag="deep"), box(7, 0, 0, 2, 2)]
    save_boxes(original, path)
    loaded = load_boxes(path)
    assert loaded == original
    save_boxes([], tmp_path / "empty.txt")
    assert load_boxes(tmp_path / "empty.txt") == []


def test_load_boxes_format(tmp_path):
    path = tmp_path / "boxes.txt"
    path.write_text("# comment\n\n3 1 2 4 5 deep\n7 0 0 2 2\n")
    loaded = load_boxes(path)
    assert len(loaded) == 2
    assert loaded[0].tag == "deep" and loaded[1].tag == ""
    assert loaded[0].slice_index == 3
    assert loaded[0].min_corner == VoxelCoord(1, 2, 3)


@pytest.mark.parametrize("line,match", [
    ("3 1 2 4", "expected 5 or 6 fields"),
    ("3 1 2 4 5 deep extra", "expected 5 or 6 fields"),
    ("3 one 2 4 5", "non-integer"),
    ("3 -1 2 4 5", "negative"),
    ("3 4 2 1 5", "corner"),
])
def test_load_boxes_errors(tmp_path, line, match):
    path = tmp_path / "boxes.txt"
    path.write_text("0 0 0 1 1\n" + line + "\n")
    with pytest.raises(DataError, match=match) as exc:
        load_boxes(path)
    assert ":2:" in str(exc.value)


def test_load_boxes_missing_file(tmp_path):
    with pytest.raises(DataError, match="cannot read"):
        load_boxes(tmp_path / "nope.txt")
