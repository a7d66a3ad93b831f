import numpy as np
import pytest
import tifffile
from PIL import Image

from grainkit import planimetric
from grainkit.errors import MaskFormatError
from grainkit.mask_io import (
    Calibration,
    OverlayStyle,
    read_label_mask,
    render_overlay,
    validate_label_mask,
    write_label_mask,
)


def test_read_16bit_tiff_identity(tmp_path):
    arr = np.array([[0, 1], [1, 2]], dtype=np.uint16)
    tifffile.imwrite(tmp_path / "m.tif", arr)
    mask = read_label_mask(tmp_path / "m.tif")
    assert mask.shape == (2, 2)
    assert mask.dtype == np.uint16
    assert np.array_equal(mask, arr)


def test_read_all_zero_mask(tmp_path):
    arr = np.zeros((8, 8), dtype=np.uint16)
    tifffile.imwrite(tmp_path / "z.tif", arr)
    mask = read_label_mask(tmp_path / "z.tif")
    assert np.count_nonzero(mask) == 0
    assert planimetric.instance_index(mask) == []


def test_read_id_above_8bit_limit(tmp_path):
    # 300 > 255: this is why masks are 16-bit in the first place.
    arr = np.full((4, 4), 300, dtype=np.uint16)
    tifffile.imwrite(tmp_path / "m.tif", arr)
    assert int(read_label_mask(tmp_path / "m.tif").max()) == 300


def test_write_read_round_trip(tmp_path):
    rng = np.random.default_rng(7)
    arr = rng.integers(0, 5000, size=(33, 47)).astype(np.uint16)
    write_label_mask(arr, tmp_path / "m.tif")
    assert np.array_equal(read_label_mask(tmp_path / "m.tif"), arr)


def test_write_1000_ids_max_sample(tmp_path):
    arr = np.arange(1001, dtype=np.uint16).reshape(11, 91)
    write_label_mask(arr, tmp_path / "m.tif")
    back = read_label_mask(tmp_path / "m.tif")
    assert int(back.max()) == 1000
    assert len(np.unique(back)) == 1001


def test_write_empty_mask(tmp_path):
    arr = np.zeros((5, 5), dtype=np.uint16)
    write_label_mask(arr, tmp_path / "m.tif")
    assert np.count_nonzero(read_label_mask(tmp_path / "m.tif")) == 0


def test_read_8bit_png_widens_losslessly(tmp_path):
    arr = np.array([[0, 10], [255, 3]], dtype=np.uint8)
    Image.fromarray(arr).save(tmp_path / "m.png")
    mask = read_label_mask(tmp_path / "m.png")
    assert mask.dtype == np.uint16
    assert np.array_equal(mask, arr.astype(np.uint16))


def test_read_16bit_png(tmp_path):
    arr = np.array([[0, 300], [65535, 2]], dtype=np.uint16)
    Image.fromarray(arr).save(tmp_path / "m.png")
    assert np.array_equal(read_label_mask(tmp_path / "m.png"), arr)


def test_reject_multichannel(tmp_path):
    rgb = np.zeros((4, 4, 3), dtype=np.uint8)
    Image.fromarray(rgb).save(tmp_path / "rgb.png")
    with pytest.raises(MaskFormatError):
        read_label_mask(tmp_path / "rgb.png")
    tifffile.imwrite(tmp_path / "rgb.tif", rgb, photometric="rgb")
    with pytest.raises(MaskFormatError):
        read_label_mask(tmp_path / "rgb.tif")


def test_reject_float_samples(tmp_path):
    tifffile.imwrite(tmp_path / "f.tif", np.zeros((4, 4), dtype=np.float32))
    with pytest.raises(MaskFormatError):
        read_label_mask(tmp_path / "f.tif")


def test_reject_oversized(tmp_path):
    arr = np.zeros((1, 2**14 + 1), dtype=np.uint16)
    tifffile.imwrite(tmp_path / "wide.tif", arr)
    with pytest.raises(MaskFormatError):
        read_label_mask(tmp_path / "wide.tif")
    # generous cap passes
    assert read_label_mask(tmp_path / "wide.tif", max_side=2**15).shape == (1, 2**14 + 1)


def test_reject_unreadable(tmp_path):
    (tmp_path / "junk.tif").write_bytes(b"not a tiff")
    with pytest.raises(MaskFormatError):
        read_label_mask(tmp_path / "junk.tif")


def test_validate_rejects_bad_arrays():
    with pytest.raises(MaskFormatError):
        validate_label_mask(np.zeros((2, 2, 2), dtype=np.uint16))
    with pytest.raises(MaskFormatError):
        validate_label_mask(np.array([[-1, 0]], dtype=np.int32))
    with pytest.raises(MaskFormatError):
        validate_label_mask(np.array([[70000]], dtype=np.int64))
    with pytest.raises(MaskFormatError):
        validate_label_mask(np.zeros((2, 2), dtype=np.float64))


def test_instance_index_partitions_nonzero_pixels():
    rng = np.random.default_rng(3)
    for _ in range(20):
        mask = rng.integers(0, 6, size=(24, 24)).astype(np.uint16)
        idx = planimetric.instance_index(mask)
        ids = sorted(i.id for i in idx)
        assert ids == sorted(int(v) for v in np.unique(mask) if v > 0)
        assert sum(i.area for i in idx) == int(np.count_nonzero(mask))
        for inst in idx:
            x0, y0, x1, y1 = inst.bbox
            assert (inst.pixels[:, 0] >= x0).all() and (inst.pixels[:, 0] <= x1).all()
            assert (inst.pixels[:, 1] >= y0).all() and (inst.pixels[:, 1] <= y1).all()


def test_calibration_positive():
    assert Calibration().pixels_per_micron == 2.26
    with pytest.raises(ValueError):
        Calibration(0.0)


# --- overlay rendering ---


def _circle(cx, cy, r, cal=Calibration(1.0)):
    return planimetric.TestCircle((cx, cy), r, planimetric.physical_area(r, cal))


def _read_rgb(path):
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"))


def test_overlay_inside_grain_and_circle(tmp_path):
    mask = np.zeros((41, 41), dtype=np.uint16)
    mask[18:23, 18:23] = 1
    style = OverlayStyle()
    render_overlay(None, mask, _circle(20, 20, 15), {1: "inside"}, style, tmp_path / "o.png")
    rgb = _read_rgb(tmp_path / "o.png")
    assert (rgb == np.array(style.inside_color)).all(axis=-1).any()
    assert (rgb == np.array(style.circle_color)).all(axis=-1).any()
    assert not (rgb == np.array(style.intercepted_color)).all(axis=-1).any()


def test_overlay_intercepted_is_distinct(tmp_path):
    mask = np.zeros((41, 41), dtype=np.uint16)
    mask[18:23, 5:30] = 1  # straddles a circle of radius 10
    style = OverlayStyle()
    render_overlay(
        None, mask, _circle(20, 20, 10), {1: "intercepted"}, style, tmp_path / "o.png"
    )
    rgb = _read_rgb(tmp_path / "o.png")
    assert (rgb == np.array(style.intercepted_color)).all(axis=-1).any()


def test_overlay_empty_mask(tmp_path):
    mask = np.zeros((31, 31), dtype=np.uint16)
    render_overlay(None, mask, _circle(15, 15, 10), {}, OverlayStyle(), tmp_path / "o.png")
    rgb = _read_rgb(tmp_path / "o.png")
    assert (rgb == np.array(OverlayStyle().circle_color)).all(axis=-1).any()


def test_overlay_blends_over_micrograph(tmp_path):
    mask = np.zeros((41, 41), dtype=np.uint16)
    mask[18:23, 18:23] = 1
    micro = np.full((41, 41), 100, dtype=np.uint8)
    style = OverlayStyle(inside_color=(0, 200, 0))
    render_overlay(micro, mask, _circle(20, 20, 15), {1: "inside"}, style, tmp_path / "o.png")
    rgb = _read_rgb(tmp_path / "o.png")
    assert tuple(rgb[20, 20]) == (50, 150, 50)  # 50/50 blend of gray 100 and the tint


def test_overlay_missing_classification(tmp_path):
    mask = np.zeros((31, 31), dtype=np.uint16)
    mask[5:8, 5:8] = 1
    with pytest.raises(ValueError, match="missing"):
        render_overlay(None, mask, _circle(15, 15, 10), {}, OverlayStyle(), tmp_path / "o.png")


def test_overlay_circle_off_canvas(tmp_path):
    mask = np.zeros((31, 31), dtype=np.uint16)
    with pytest.raises(ValueError, match="fit"):
        render_overlay(None, mask, _circle(15, 15, 40), {}, OverlayStyle(), tmp_path / "o.png")
