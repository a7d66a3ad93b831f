"""Convert edge-annotated grain masks into instance label maps.

Ground-truth masks in the source dataset draw grain boundaries as bright
lines over dark interiors. The pipeline here recovers one integer instance
per grain: threshold the interiors, erode to break single-pixel bridges
between touching grains, label connected components, then drop components
too small to be real grains.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import MaskFormatError
from .mask_io import MAX_LABEL

_CROSS = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
_SQUARE = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class PrepConfig:
    """Parameters of the interior-extraction pipeline."""

    threshold: int = 128
    erosion_radius: int = 1
    min_area: int = 200
    connectivity: int = 4

    def __post_init__(self) -> None:
        if not 0 < self.threshold <= 255:
            raise ValueError(f"threshold must be in (0, 255], got {self.threshold}")
        if self.erosion_radius < 0:
            raise ValueError("erosion_radius must be >= 0")
        if self.min_area < 0:
            raise ValueError("min_area must be >= 0")
        if self.connectivity not in (4, 8):
            raise ValueError(f"connectivity must be 4 or 8, got {self.connectivity}")


def binarize_interiors(image: np.ndarray, threshold: int = 128) -> np.ndarray:
    """Boolean mask of grain interiors: set exactly where intensity < threshold."""
    arr = np.asarray(image)
    if arr.ndim != 2:
        raise MaskFormatError(f"expected 2D grayscale image, got shape {arr.shape}")
    return arr < threshold


def disk_element(radius: int) -> np.ndarray:
    """Discrete disk structuring element: offsets with dx^2 + dy^2 <= r^2.

    Radius 1 is the 5-pixel cross, the weakest element that still opens a
    single-pixel gap between subtly touching grains.
    """
    if radius < 0:
        raise ValueError("radius must be >= 0")
    span = np.arange(-radius, radius + 1)
    dx, dy = np.meshgrid(span, span)
    return dx * dx + dy * dy <= radius * radius


def erode(mask: np.ndarray, radius: int) -> np.ndarray:
    """Binary erosion by a discrete disk; pixels outside the image count as unset.

    Radius 0 is the identity. A pixel survives iff the whole element centered
    on it lies within the set.
    """
    mask = np.asarray(mask, dtype=bool)
    if radius == 0:
        return mask.copy()
    return ndimage.binary_erosion(mask, structure=disk_element(radius), border_value=0)


def _structure(connectivity: int) -> np.ndarray:
    if connectivity == 4:
        return _CROSS
    if connectivity == 8:
        return _SQUARE
    raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")


def label_components(mask: np.ndarray, connectivity: int = 4) -> np.ndarray:
    """Label connected components with IDs 1..K in raster order of first pixel.

    Two pixels share an ID iff they are connected under the chosen
    connectivity. Raises :class:`MaskFormatError` if K would overflow the
    16-bit label range.
    """
    mask = np.asarray(mask, dtype=bool)
    labeled, count = ndimage.label(mask, structure=_structure(connectivity))
    if count > MAX_LABEL:
        raise MaskFormatError(
            f"{count} components exceed the 16-bit limit of {MAX_LABEL}"
        )
    return _relabel_raster_order(labeled, count)


def _relabel_raster_order(labeled: np.ndarray, count: int) -> np.ndarray:
    """Remap labels so IDs follow the raster order of each component's first pixel."""
    if count == 0:
        return np.zeros(labeled.shape, dtype=np.uint16)
    flat = labeled.ravel()
    nonzero = np.flatnonzero(flat)
    # First raster position of each label 1..count.
    _, first_idx = np.unique(flat[nonzero], return_index=True)
    order = np.argsort(nonzero[first_idx])
    remap = np.zeros(count + 1, dtype=np.uint16)
    remap[order + 1] = np.arange(1, count + 1, dtype=np.uint16)
    return remap[labeled]


def filter_small(labeled: np.ndarray, min_area: int) -> np.ndarray:
    """Drop components with area strictly below ``min_area``; keep IDs of survivors.

    ``labeled`` must come from a single connectivity pass. The returned mask
    is boolean (relabel afterwards if contiguous IDs are needed).
    """
    labeled = np.asarray(labeled)
    if labeled.size == 0 or int(labeled.max()) == 0:
        return np.zeros(labeled.shape, dtype=bool)
    areas = np.bincount(labeled.ravel())
    keep = areas >= min_area
    keep[0] = False
    return keep[labeled]


def prepare_mask(raw: np.ndarray, cfg: PrepConfig = PrepConfig()) -> np.ndarray:
    """Full pipeline: binarize, erode, label, size-filter, relabel contiguous.

    Returns a uint16 instance label mask satisfying the label-mask contract.
    """
    interiors = binarize_interiors(raw, cfg.threshold)
    separated = erode(interiors, cfg.erosion_radius)
    labeled = label_components(separated, cfg.connectivity)
    kept = filter_small(labeled, cfg.min_area)
    return label_components(kept, cfg.connectivity)
