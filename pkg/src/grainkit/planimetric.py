"""Jeffries planimetric grain sizing on instance label masks.

The procedure counts grains relative to a circular test figure: grains whose
maximum radial distance from the circle center stays within the radius count
whole, grains whose minimum distance is within but maximum beyond count half.
The circle is sized dynamically so a target number of grains lies fully
inside, its physical area follows from the pixel calibration, and the count
normalizes to grains per square millimetre at 1x magnification, which maps
onto the logarithmic ASTM grain size scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import EmptyMaskError, NonPositiveDensityError, TargetUnreachableError
from .mask_io import Calibration, validate_label_mask

# ASTM E112 constants: G doubles the grain count per unit area every full step
# (3.321928 ~ 1/log10(2)); 0.0002 M^2 is the multiplier for the standard
# 5000 mm^2 test figure at magnification M.
ASTM_SLOPE = 3.321928
ASTM_OFFSET = -2.954
STANDARD_FIGURE_MULTIPLIER = 0.0002


@dataclass(frozen=True)
class GrainInstance:
    """One labeled grain: pixel population and bounding box."""

    id: int
    area: int
    bbox: tuple[int, int, int, int]  # (min_x, min_y, max_x, max_y), inclusive
    pixels: np.ndarray  # (N, 2) array of (x, y) coordinates


@dataclass(frozen=True)
class RadialExtent:
    """Min/max Euclidean distance of a grain's pixels from a query center."""

    grain_id: int
    d_min: float
    d_max: float


@dataclass(frozen=True)
class TestCircle:
    """Inscribed test figure: pixel geometry plus derived physical area."""

    __test__ = False  # not a pytest class, despite the domain name

    center: tuple[float, float]
    radius: float
    physical_area_mm2: float


@dataclass(frozen=True)
class JeffriesResult:
    """Planimetric measurement of one micrograph."""

    n_inside: int
    n_intercepted: int
    f: float
    n_a: float
    g: float
    circle: TestCircle

    def as_dict(self) -> dict:
        return {
            "n_inside": self.n_inside,
            "n_intercepted": self.n_intercepted,
            "f": self.f,
            "n_a": self.n_a,
            "g": None if math.isnan(self.g) else self.g,
            "circle": {
                "center": list(self.circle.center),
                "radius": self.circle.radius,
                "physical_area_mm2": self.circle.physical_area_mm2,
            },
        }


def instance_index(mask: np.ndarray) -> list[GrainInstance]:
    """Enumerate grain instances of a label mask, ordered by ID.

    Every nonzero ID appears exactly once; the summed areas equal the count
    of nonzero pixels.
    """
    mask = validate_label_mask(mask)
    ys, xs = np.nonzero(mask)
    if ys.size == 0:
        return []
    labels = mask[ys, xs].astype(np.int64)
    order = np.argsort(labels, kind="stable")
    labels, xs, ys = labels[order], xs[order], ys[order]
    ids, starts = np.unique(labels, return_index=True)
    bounds = np.append(starts, labels.size)
    out = []
    for i, gid in enumerate(ids):
        sl = slice(bounds[i], bounds[i + 1])
        px, py = xs[sl], ys[sl]
        out.append(
            GrainInstance(
                id=int(gid),
                area=int(px.size),
                bbox=(int(px.min()), int(py.min()), int(px.max()), int(py.max())),
                pixels=np.column_stack([px, py]).astype(np.int64),
            )
        )
    return out


def image_center(mask: np.ndarray) -> tuple[float, float]:
    """Geometric center of the pixel grid, in pixel coordinates."""
    h, w = mask.shape
    return ((w - 1) / 2.0, (h - 1) / 2.0)


def radial_extents(
    mask: np.ndarray, center: tuple[float, float]
) -> list[RadialExtent]:
    """Per-grain min/max Euclidean distance from ``center`` to pixel centers.

    One extent per nonzero ID, ordered by ID. ``center`` must lie within the
    image.
    """
    mask = validate_label_mask(mask)
    h, w = mask.shape
    cx, cy = center
    if not (0 <= cx <= w - 1 and 0 <= cy <= h - 1):
        raise ValueError(f"center ({cx}, {cy}) outside the {w}x{h} image")

    ids = np.unique(mask)
    ids = ids[ids > 0]
    if ids.size == 0:
        return []

    yy, xx = np.mgrid[0:h, 0:w]
    # sqrt of the squared sum (not hypot) so results are bit-reproducible
    # against any straightforward per-pixel scan
    dist = np.sqrt((xx - cx) ** 2 + (yy - cy) ** 2)
    d_min = ndimage.minimum(dist, labels=mask, index=ids)
    d_max = ndimage.maximum(dist, labels=mask, index=ids)
    return [
        RadialExtent(int(i), float(lo), float(hi))
        for i, lo, hi in zip(ids, d_min, d_max)
    ]


def classify(
    extents: list[RadialExtent], radius: float
) -> tuple[set[int], set[int], set[int]]:
    """Partition grains against a circle of the given radius.

    inside: d_max <= r (the boundary case counts as inside);
    intercepted: d_min <= r < d_max; outside: d_min > r.
    """
    if radius <= 0:
        raise ValueError("radius must be > 0")
    inside, intercepted, outside = set(), set(), set()
    for e in extents:
        if e.d_max <= radius:
            inside.add(e.grain_id)
        elif e.d_min <= radius:
            intercepted.add(e.grain_id)
        else:
            outside.add(e.grain_id)
    return inside, intercepted, outside


def physical_area(radius_px: float, cal: Calibration) -> float:
    """Physical disk area in mm^2 for a pixel radius under the calibration.

    pi r^2 square pixels, divided by c^2 (px/um)^2 to get um^2, divided by
    1e6 to land in mm^2.
    """
    if radius_px <= 0:
        raise ValueError("radius must be > 0")
    c = cal.pixels_per_micron
    return math.pi * radius_px**2 / (c**2 * 1e6)


def jeffries_multiplier(
    *, area_mm2: float | None = None, magnification: float | None = None
) -> float:
    """Normalization factor from counted grains to grains/mm^2 at 1x.

    Exactly one keyword must be given: ``area_mm2`` selects the dynamic form
    1/area (magnification folded into the measured area), ``magnification``
    the standard-figure form 0.0002 M^2.
    """
    if (area_mm2 is None) == (magnification is None):
        raise ValueError("give exactly one of area_mm2 or magnification")
    if area_mm2 is not None:
        if area_mm2 <= 0:
            raise ValueError("area_mm2 must be > 0")
        return 1.0 / area_mm2
    if magnification <= 0:
        raise ValueError("magnification must be > 0")
    return STANDARD_FIGURE_MULTIPLIER * magnification**2


def grain_density(n_inside: int, n_intercepted: int, f: float) -> float:
    """Grains per mm^2 at 1x: f * (N_inside + N_intercepted / 2)."""
    if n_inside < 0 or n_intercepted < 0:
        raise ValueError("counts must be >= 0")
    if f <= 0:
        raise ValueError("multiplier must be > 0")
    return f * (n_inside + n_intercepted / 2.0)


def astm_g(n_a: float) -> float:
    """ASTM grain size number for a density in grains/mm^2 at 1x."""
    if n_a <= 0:
        raise NonPositiveDensityError(f"grain density must be > 0, got {n_a}")
    return ASTM_SLOPE * math.log10(n_a) + ASTM_OFFSET


def fit_limit(shape: tuple[int, int], center: tuple[float, float]) -> float:
    h, w = shape
    cx, cy = center
    return min(cx, cy, w - 1 - cx, h - 1 - cy)


def radius_for_target(
    extents: list[RadialExtent], target: int, fit_limit: float
) -> float:
    """Minimal radius enclosing ``target`` grains: the target-th smallest d_max."""
    if not extents:
        raise EmptyMaskError("mask holds no grain instances")
    if target < 1:
        raise ValueError("target must be >= 1")
    d_max = sorted(e.d_max for e in extents)
    if len(d_max) < target:
        raise TargetUnreachableError(
            f"mask holds {len(d_max)} grains, target is {target}"
        )
    radius = d_max[target - 1]
    if radius > fit_limit:
        within = sum(1 for d in d_max if d <= fit_limit)
        raise TargetUnreachableError(
            f"only {within} grains fit a circle on this canvas (limit "
            f"{fit_limit:.1f} px), target is {target}"
        )
    if radius <= 0:
        raise TargetUnreachableError("target grains collapse onto the center pixel")
    return radius


def inscribe_circle(
    mask: np.ndarray,
    target: int,
    center: tuple[float, float] | None = None,
    cal: Calibration = Calibration(),
) -> TestCircle:
    """Size a test circle so at least ``target`` grains lie fully inside.

    The radius is the target-th smallest maximum radial distance over all
    grains, i.e. the minimal radius reaching the target (ties at the radius
    all count inside, so the achieved count may exceed the target). The
    circle must fit the canvas whole; otherwise
    :class:`TargetUnreachableError` is raised.
    """
    mask = validate_label_mask(mask)
    if center is None:
        center = image_center(mask)
    extents = radial_extents(mask, center)
    radius = radius_for_target(extents, target, fit_limit(mask.shape, center))
    return TestCircle(center, radius, physical_area(radius, cal))


def analyze(
    mask: np.ndarray,
    cal: Calibration = Calibration(),
    target: int = 60,
    circle: TestCircle | None = None,
) -> JeffriesResult:
    """Run the full planimetric measurement on one label mask.

    When ``circle`` is supplied it is used verbatim (superimposed-circle
    mode); otherwise a circle is inscribed on this mask for ``target``
    grains. The multiplier is always the dynamic form 1/area.
    """
    mask = validate_label_mask(mask)
    if circle is None:
        center = image_center(mask)
        extents = radial_extents(mask, center)
        radius = radius_for_target(extents, target, fit_limit(mask.shape, center))
        circle = TestCircle(center, radius, physical_area(radius, cal))
    else:
        extents = radial_extents(mask, circle.center)

    inside, intercepted, _ = classify(extents, circle.radius)
    f = jeffries_multiplier(area_mm2=circle.physical_area_mm2)
    n_a = grain_density(len(inside), len(intercepted), f)
    g = astm_g(n_a) if n_a > 0 else math.nan
    return JeffriesResult(
        n_inside=len(inside),
        n_intercepted=len(intercepted),
        f=f,
        n_a=n_a,
        g=g,
        circle=circle,
    )
