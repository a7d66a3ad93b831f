"""Read/write instance label masks and render classification overlays.

A label mask is a 2D ``numpy`` array of unsigned integers: 0 is background,
every positive value is one grain instance. Masks are exchanged on disk as
16-bit single-channel TIFFs (canonical) or 8/16-bit grayscale PNGs.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Mapping

import numpy as np
import tifffile
from PIL import Image

from .errors import MaskFormatError

if TYPE_CHECKING:
    from .planimetric import TestCircle

# Instance IDs must fit the 16-bit file contract.
MAX_LABEL = 65535

# Reject absurd dimensions early instead of exhausting memory.
DEFAULT_MAX_SIDE = 2**14

_PIL_GRAY_MODES = {"L", "I", "I;16", "I;16B", "I;16L"}


@dataclass(frozen=True)
class Calibration:
    """Spatial calibration relating pixels to physical length.

    ``pixels_per_micron`` is the factor measured from the dataset scale bar;
    2.26 px/um is the default for the stainless-steel source imagery.
    """

    pixels_per_micron: float = 2.26

    def __post_init__(self) -> None:
        if not self.pixels_per_micron > 0:
            raise ValueError(
                f"pixels_per_micron must be > 0, got {self.pixels_per_micron}"
            )


@dataclass(frozen=True)
class OverlayStyle:
    """Colors and stroke width for the classification overlay."""

    inside_color: tuple[int, int, int] = (0, 200, 0)
    intercepted_color: tuple[int, int, int] = (230, 210, 0)
    circle_color: tuple[int, int, int] = (220, 30, 30)
    circle_thickness: int = 3

    def __post_init__(self) -> None:
        if self.circle_thickness < 1:
            raise ValueError("circle_thickness must be >= 1")


def validate_label_mask(mask: np.ndarray) -> np.ndarray:
    """Check the label-mask contract and return the array as uint16.

    Raises :class:`MaskFormatError` on wrong rank, signedness, or IDs above
    the 16-bit limit.
    """
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise MaskFormatError(f"label mask must be 2D, got shape {arr.shape}")
    if arr.dtype.kind not in "ui":
        raise MaskFormatError(f"label mask must be integer-typed, got {arr.dtype}")
    if arr.size and int(arr.min()) < 0:
        raise MaskFormatError("label mask contains negative IDs")
    if arr.size and int(arr.max()) > MAX_LABEL:
        raise MaskFormatError(
            f"label mask holds ID {int(arr.max())} above the 16-bit limit {MAX_LABEL}"
        )
    return arr.astype(np.uint16, copy=False)


def label_ids(mask: np.ndarray) -> np.ndarray:
    """Sorted array of distinct nonzero instance IDs present in the mask."""
    ids = np.unique(mask)
    return ids[ids > 0]


def read_label_mask(path: str | Path, max_side: int = DEFAULT_MAX_SIDE) -> np.ndarray:
    """Load an instance label mask from a TIFF or PNG file.

    Parameters
    ----------
    path : str or Path
        Single-channel TIFF or PNG of 8/16-bit unsigned samples.
    max_side : int
        Maximum accepted width/height.

    Returns
    -------
    np.ndarray
        uint16 label grid, IDs preserved bit-exactly (8-bit files widen
        losslessly).
    """
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix in (".tif", ".tiff"):
        arr = _read_tiff(path, max_side)
    else:
        arr = _read_pil(path, max_side)
    return validate_label_mask(arr)


def _read_tiff(path: Path, max_side: int) -> np.ndarray:
    try:
        with tifffile.TiffFile(path) as tf:
            page = tf.pages[0]
            if page.samplesperpixel != 1:
                raise MaskFormatError(
                    f"{path}: multi-channel TIFF ({page.samplesperpixel} samples/px)"
                )
            if page.dtype is None or page.dtype.kind != "u" or page.dtype.itemsize > 2:
                raise MaskFormatError(
                    f"{path}: samples must be 8/16-bit unsigned, got {page.dtype}"
                )
            h, w = page.shape[:2]
            _check_side(path, w, h, max_side)
            return page.asarray()
    except MaskFormatError:
        raise
    except Exception as exc:
        raise MaskFormatError(f"{path}: unreadable TIFF ({exc})") from exc


def _read_pil(path: Path, max_side: int) -> np.ndarray:
    try:
        with Image.open(path) as im:
            w, h = im.size
            _check_side(path, w, h, max_side)
            if im.mode not in _PIL_GRAY_MODES:
                raise MaskFormatError(
                    f"{path}: expected single-channel 8/16-bit image, got mode {im.mode!r}"
                )
            arr = np.asarray(im)
    except MaskFormatError:
        raise
    except Exception as exc:
        raise MaskFormatError(f"{path}: unreadable image ({exc})") from exc
    if arr.dtype.kind not in "ui":
        raise MaskFormatError(f"{path}: float samples are not a label mask")
    # Pillow widens some 16-bit files to int32; the samples are still <= 65535.
    if arr.size and (int(arr.min()) < 0 or int(arr.max()) > MAX_LABEL):
        raise MaskFormatError(f"{path}: sample values outside the 16-bit range")
    return arr.astype(np.uint16)


def _check_side(path: Path, w: int, h: int, max_side: int) -> None:
    if w > max_side or h > max_side:
        raise MaskFormatError(
            f"{path}: dimensions {w}x{h} exceed the cap of {max_side} per side"
        )


def write_label_mask(mask: np.ndarray, path: str | Path) -> None:
    """Write a label mask as a 16-bit single-channel TIFF.

    The write is atomic (temp file + rename) and round-trips bit-exactly
    through :func:`read_label_mask`.
    """
    arr = validate_label_mask(mask)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    try:
        tifffile.imwrite(tmp, arr, photometric="minisblack")
        os.replace(tmp, path)
    except MaskFormatError:
        raise
    except Exception as exc:
        tmp.unlink(missing_ok=True)
        raise OSError(f"cannot write {path}: {exc}") from exc


def read_grayscale(path: str | Path, max_side: int = DEFAULT_MAX_SIDE) -> np.ndarray:
    """Load an 8-bit grayscale image (micrograph or edge-annotated mask)."""
    path = Path(path)
    if path.suffix.lower() in (".tif", ".tiff"):
        arr = _read_tiff(path, max_side)
    else:
        arr = _read_pil(path, max_side)
    if arr.size and int(arr.max()) > 255:
        raise MaskFormatError(f"{path}: expected 8-bit intensities, max is {arr.max()}")
    return arr.astype(np.uint8)


def render_overlay(
    micrograph: np.ndarray | None,
    mask: np.ndarray,
    circle: "TestCircle",
    classification: Mapping[int, str],
    style: OverlayStyle,
    path: str | Path,
) -> None:
    """Render the Jeffries classification as an 8-bit RGB PNG.

    Grains entirely inside the test circle are tinted ``inside_color``,
    grains crossing the boundary ``intercepted_color``, and the circle is
    stroked on top at its radius. When a grayscale ``micrograph`` is given
    the tint is alpha-blended at 50% over it; otherwise fills are solid.

    ``classification`` must map every nonzero ID in ``mask`` to one of
    ``"inside"``, ``"intercepted"``, ``"outside"``.
    """
    mask = validate_label_mask(mask)
    h, w = mask.shape
    cx, cy = circle.center
    r = circle.radius
    if cx - r < 0 or cy - r < 0 or cx + r > w - 1 or cy + r > h - 1:
        raise ValueError(
            f"circle (center=({cx}, {cy}), r={r}) does not fit the {w}x{h} canvas"
        )

    ids = label_ids(mask)
    missing = [int(i) for i in ids if int(i) not in classification]
    if missing:
        raise ValueError(f"classification missing IDs: {missing[:10]}")

    if micrograph is not None:
        if micrograph.shape != mask.shape:
            raise ValueError("micrograph and mask dimensions differ")
        base = np.repeat(micrograph.astype(np.float32)[..., None], 3, axis=2)
        blend = 0.5
    else:
        base = np.zeros((h, w, 3), dtype=np.float32)
        blend = 1.0

    canvas = base.copy()
    color_by_class = {
        "inside": style.inside_color,
        "intercepted": style.intercepted_color,
    }
    # One boolean membership pass per class keeps this linear in pixels.
    for cls, color in color_by_class.items():
        cls_ids = [i for i in ids if classification[int(i)] == cls]
        if not cls_ids:
            continue
        sel = np.isin(mask, cls_ids)
        canvas[sel] = (1 - blend) * base[sel] + blend * np.asarray(color, np.float32)

    yy, xx = np.mgrid[0:h, 0:w]
    dist = np.hypot(xx - cx, yy - cy)
    ring = np.abs(dist - r) <= style.circle_thickness / 2
    canvas[ring] = np.asarray(style.circle_color, np.float32)

    out = np.clip(canvas, 0, 255).astype(np.uint8)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    Image.fromarray(out, mode="RGB").save(tmp, format="PNG")
    os.replace(tmp, path)
