import numpy as np
import pytest

from hemoseg.errors import DataError
from hemoseg.overlay import BLUE, GREEN, RED, overlay_slices, write_ppm
from hemoseg.volume import LabelMask, Volume3D


def read_ppm(path):
    blob = path.read_bytes()
    magic, size, maxval, rest = blob.split(b"\n", 3)
    assert magic == b"P6" and maxval == b"255"
    nx, ny = (int(v) for v in size.split())
    pixels = np.frombuffer(rest, dtype=np.uint8).reshape(ny, nx, 3)
    return np.transpose(pixels, (1, 0, 2))   # back to (x, y, 3)


def test_write_ppm_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    rgb = rng.integers(0, 256, size=(5, 3, 3), dtype=np.uint8)
    path = tmp_path / "img.ppm"
    write_ppm(path, rgb)
    assert np.array_equal(read_ppm(path), rgb)


def test_overlay_colors(tmp_path):
    data = np.zeros((6, 6, 2), dtype=np.float32)
    data[:, :, 0] = 50.0   # mid-gray under the default window
    vol = Volume3D(data=data, spacing=(1, 1, 1))
    pred = np.zeros((6, 6, 2), dtype=bool)
    truth = np.zeros((6, 6, 2), dtype=bool)
    pred[1, 1, 0] = True; truth[1, 1, 0] = True    # agreement
    truth[2, 2, 0] = True                          # miss
    pred[3, 3, 0] = True                           # spurious
    paths = overlay_slices(vol, LabelMask(pred), LabelMask(truth), tmp_path / "o")
    assert [p.name for p in paths] == ["slice_0000.ppm", "slice_0001.ppm"]
    img = read_ppm(paths[0])
    assert tuple(img[1, 1]) == GREEN
    assert tuple(img[2, 2]) == RED
    assert tuple(img[3, 3]) == BLUE
    assert tuple(img[0, 0]) == (127, 127, 127)     # 50 HU in [0, 100]
    assert np.array_equal(read_ppm(paths[1]),
                          np.zeros((6, 6, 3), dtype=np.uint8))


def test_overlay_perfect_prediction_has_no_red_or_blue(tmp_path):
    data = np.full((5, 5, 1), 30.0, dtype=np.float32)
    mask = np.zeros((5, 5, 1), dtype=bool)
    mask[1:4, 1:4, 0] = True
    vol = Volume3D(data=data, spacing=(1, 1, 1))
    (path,) = overlay_slices(vol, LabelMask(mask), LabelMask(mask), tmp_path / "o")
    img = read_ppm(path)
    hits = img.reshape(-1, 3)
    assert not (hits == RED).all(axis=1).any()
    assert not (hits == BLUE).all(axis=1).any()
    assert ((hits == GREEN).all(axis=1)).sum() == 9


def test_overlay_empty_prediction_is_red_only(tmp_path):
    data = np.full((5, 5, 1), 30.0, dtype=np.float32)
    truth = np.zeros((5, 5, 1), dtype=bool)
    truth[2, 2, 0] = True
    vol = Volume3D(data=data, spacing=(1, 1, 1))
    (path,) = overlay_slices(vol, LabelMask(np.zeros_like(truth)),
                             LabelMask(truth), tmp_path / "o")
    img = read_ppm(path)
    assert tuple(img[2, 2]) == RED
    assert not (img.reshape(-1, 3) == GREEN).all(axis=1).any()


def test_overlay_without_truth_shows_prediction_green(tmp_path):
    data = np.full((5, 5, 1), 30.0, dtype=np.float32)
    pred = np.zeros((5, 5, 1), dtype=bool)
    pred[2, 2, 0] = True
    vol = Volume3D(data=data, spacing=(1, 1, 1))
    (path,) = overlay_slices(vol, LabelMask(pred), None, tmp_path / "o")
    img = read_ppm(path)
    assert tuple(img[2, 2]) == GREEN
    flat = img.reshape(-1, 3)
    assert not (flat == RED).all(axis=1).any()
    assert not (flat == BLUE).all(axis=1).any()


def test_overlay_dim_mismatch(tmp_path):
    vol = Volume3D(data=np.zeros((4, 4, 2), dtype=np.float32), spacing=(1, 1, 1))
    with pytest.raises(DataError):
        overlay_slices(vol, LabelMask(np.zeros((4, 4, 3), bool)), None, tmp_path)
