"""Synthetic Voronoi microstructures with known ground truth.

Fields are generated by labeling every pixel with its nearest seed (exact
Euclidean metric, ties resolved to the lowest seed index), which gives a
grain map whose true count and density are known by construction. A
degradation pass can merge adjacent grains or bisect grains to mimic
under-/over-segmenting predictors for benchmark tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .errors import MaskFormatError
from .mask_io import MAX_LABEL, Calibration, validate_label_mask

_CROSS = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass(frozen=True)
class Degradation:
    """Controlled corruption of a label mask.

    ``merge_fraction`` of the instance count is removed by unifying adjacent
    pairs; ``split_fraction`` of instances are bisected along a random chord.
    """

    merge_fraction: float = 0.0
    split_fraction: float = 0.0
    rng_seed: int = 0

    def __post_init__(self) -> None:
        for name in ("merge_fraction", "split_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")


@dataclass(frozen=True)
class SynthSpec:
    width: int = 512
    height: int = 512
    n_seeds: int = 300
    rng_seed: int = 0
    boundary_thickness: int = 1
    degradation: Degradation | None = None

    def __post_init__(self) -> None:
        if self.n_seeds < 1 or self.n_seeds > self.width * self.height:
            raise ValueError("n_seeds must be in [1, width*height]")
        if self.boundary_thickness < 0:
            raise ValueError("boundary_thickness must be >= 0")


def true_density(spec: SynthSpec, cal: Calibration) -> float:
    """Seed density in grains per mm^2 for the spec's canvas under a calibration."""
    c = cal.pixels_per_micron
    canvas_mm2 = spec.width * spec.height / (c**2 * 1e6)
    return spec.n_seeds / canvas_mm2


def seed_points(spec: SynthSpec) -> np.ndarray:
    """Deterministic distinct integer seed positions, as an (n, 2) array of (x, y)."""
    rng = np.random.default_rng(spec.rng_seed)
    flat = rng.choice(spec.width * spec.height, size=spec.n_seeds, replace=False)
    ys, xs = np.divmod(flat, spec.width)
    return np.column_stack([xs, ys]).astype(np.int64)


def generate_voronoi(spec: SynthSpec) -> tuple[np.ndarray, np.ndarray]:
    """Generate a Voronoi grain field.

    Returns ``(labels, edges)``: a uint16 label mask where pixel p carries
    ``1 + argmin_i |p - seed_i|`` (lowest index wins exact ties), and an
    8-bit edge rendering with boundaries at 255 over 0 interiors. With
    ``boundary_thickness`` >= 1 the inter-grain interface pixels (dilated
    ``thickness - 1`` times) are carved out of the label mask and drawn in
    the edge image; at 0 the labels partition the canvas and the edge image
    is empty.

    The degradation field of the spec is NOT applied here; see
    :func:`degrade`.
    """
    seeds = seed_points(spec)
    labels = _nearest_seed_labels(spec.width, spec.height, seeds)

    edges = np.zeros((spec.height, spec.width), dtype=np.uint8)
    if spec.boundary_thickness >= 1:
        boundary = interface_pixels(labels)
        if spec.boundary_thickness > 1:
            boundary = ndimage.binary_dilation(
                boundary, structure=_CROSS, iterations=spec.boundary_thickness - 1
            )
        labels = labels.copy()
        labels[boundary] = 0
        edges[boundary] = 255
    return labels, edges


def _nearest_seed_labels(width: int, height: int, seeds: np.ndarray) -> np.ndarray:
    n = len(seeds)
    if n == 1:
        return np.ones((height, width), dtype=np.uint16)

    yy, xx = np.mgrid[0:height, 0:width]
    pixels = np.column_stack([xx.ravel(), yy.ravel()]).astype(np.int64)

    tree = cKDTree(seeds.astype(np.float64))
    _, idx = tree.query(pixels.astype(np.float64), k=2, workers=-1)
    best, second = idx[:, 0], idx[:, 1]

    # Squared distances of integer coordinates are exact; a tie exists iff the
    # two nearest candidates are equidistant. Tied pixels get a full scan so
    # the lowest seed index wins even among 3+ way ties.
    d_best = _sq_dist(pixels, seeds[best])
    d_second = _sq_dist(pixels, seeds[second])
    tied = d_best == d_second
    if tied.any():
        tp = pixels[tied]
        d_all = (
            (tp[:, None, 0] - seeds[None, :, 0]) ** 2
            + (tp[:, None, 1] - seeds[None, :, 1]) ** 2
        )
        best[tied] = np.argmin(d_all, axis=1)

    return (best + 1).astype(np.uint16).reshape(height, width)


def _sq_dist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = a - b
    return d[:, 0] ** 2 + d[:, 1] ** 2


def interface_pixels(labels: np.ndarray) -> np.ndarray:
    """Pixels whose 4-neighbor carries a different label (two-sided)."""
    boundary = np.zeros(labels.shape, dtype=bool)
    boundary[:-1, :] |= labels[:-1, :] != labels[1:, :]
    boundary[1:, :] |= labels[1:, :] != labels[:-1, :]
    boundary[:, :-1] |= labels[:, :-1] != labels[:, 1:]
    boundary[:, 1:] |= labels[:, 1:] != labels[:, :-1]
    return boundary


def adjacent_pairs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Sorted list of instance ID pairs that are spatial neighbors.

    Background is first filled with the label of the nearest instance pixel,
    so instances separated by a carved boundary band of any width still
    register as neighbors; pairs are then read off 4-neighbor contacts of
    the filled partition.
    """
    filled = fill_to_nearest(mask)
    pairs: set[tuple[int, int]] = set()
    for a, b in ((filled[:, :-1], filled[:, 1:]), (filled[:-1, :], filled[1:, :])):
        hit = (a > 0) & (b > 0) & (a != b)
        if hit.any():
            lo = np.minimum(a[hit], b[hit]).astype(np.int64)
            hi = np.maximum(a[hit], b[hit]).astype(np.int64)
            pairs.update(zip(lo.tolist(), hi.tolist()))
    return sorted(pairs)


def fill_to_nearest(mask: np.ndarray) -> np.ndarray:
    """Assign every background pixel the label of its nearest instance pixel."""
    if not (mask == 0).any() or not (mask > 0).any():
        return mask.copy()
    _, (iy, ix) = ndimage.distance_transform_edt(mask == 0, return_indices=True)
    return mask[iy, ix]


def relabel_contiguous(mask: np.ndarray) -> np.ndarray:
    """Remap distinct nonzero IDs to 1..K by first raster appearance.

    Pure ID-space remap: connectivity is not recomputed, so instances that
    became disconnected (or merged across a gap) keep a single ID.
    """
    mask = np.asarray(mask)
    flat = mask.ravel()
    nonzero = np.flatnonzero(flat)
    if nonzero.size == 0:
        return np.zeros(mask.shape, dtype=np.uint16)
    ids, first_idx = np.unique(flat[nonzero], return_index=True)
    if len(ids) > MAX_LABEL:
        raise MaskFormatError(f"{len(ids)} instances exceed the 16-bit limit")
    order = np.argsort(nonzero[first_idx])
    remap = np.zeros(int(ids.max()) + 1, dtype=np.uint16)
    remap[ids[order]] = np.arange(1, len(ids) + 1, dtype=np.uint16)
    return remap[mask]


def degrade(mask: np.ndarray, deg: Degradation) -> np.ndarray:
    """Apply controlled merge/split corruption; deterministic per seed.

    Merges unify ``round(merge_fraction * K)`` adjacent pairs (fewer when
    adjacency runs out), then splits bisect ``round(split_fraction * K')``
    instances along random chords through their centroids. The result is
    relabeled contiguously.
    """
    mask = validate_label_mask(mask).copy()
    rng = np.random.default_rng(deg.rng_seed)

    ids = np.unique(mask)
    ids = ids[ids > 0]
    if ids.size == 0 or (deg.merge_fraction == 0 and deg.split_fraction == 0):
        return mask

    if deg.merge_fraction > 0:
        mask = _merge_pass(mask, deg.merge_fraction, rng)
    if deg.split_fraction > 0:
        mask = _split_pass(mask, deg.split_fraction, rng)
    return relabel_contiguous(mask)


def _merge_pass(mask: np.ndarray, fraction: float, rng: np.random.Generator) -> np.ndarray:
    ids = np.unique(mask)
    ids = ids[ids > 0]
    wanted = int(round(fraction * ids.size))
    pairs = adjacent_pairs(mask)
    if wanted == 0 or not pairs:
        return mask

    parent = np.arange(int(ids.max()) + 1, dtype=np.int64)

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    merged = 0
    for i in rng.permutation(len(pairs)):
        a, b = pairs[i]
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
            merged += 1
            if merged >= wanted:
                break

    roots = np.array([find(x) for x in range(parent.size)], dtype=np.int64)
    return roots[mask].astype(np.uint16)


def _split_pass(mask: np.ndarray, fraction: float, rng: np.random.Generator) -> np.ndarray:
    ids = np.unique(mask)
    ids = ids[ids > 0]
    wanted = int(round(fraction * ids.size))
    if wanted == 0:
        return mask

    out = mask.astype(np.int64)
    next_id = int(ids.max()) + 1
    chosen = rng.choice(ids, size=min(wanted, ids.size), replace=False)
    for gid in chosen:
        ys, xs = np.nonzero(mask == gid)
        if xs.size < 2:
            continue
        theta = rng.uniform(0, 2 * np.pi)
        nx, ny = np.cos(theta), np.sin(theta)
        side = (xs - xs.mean()) * nx + (ys - ys.mean()) * ny >= 0
        if side.all() or not side.any():
            continue
        out[ys[side], xs[side]] = next_id
        next_id += 1
    return out


def generate_pair(spec: SynthSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    """Generate ``(labels, edges, degraded)`` for a spec.

    ``degraded`` is None unless the spec carries a degradation block.
    """
    labels, edges = generate_voronoi(spec)
    degraded = degrade(labels, spec.degradation) if spec.degradation else None
    return labels, edges, degraded
