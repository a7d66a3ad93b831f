"""Reassemble full-field micrographs and label masks from coordinate-named patches.

Patches are assumed pre-aligned and abutting; the grid position of each file
is parsed from its name. A complete group of rows x cols patches produces one
stitched image. Label-mask groups are additionally relabeled by connected
components after assembly so a grain spanning a seam becomes one instance.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import mask_io
from .prep import label_components

DEFAULT_PATTERN = r"^(?P<group>.+?)_r(?P<row>\d+)_c(?P<col>\d+)\.[^.]+$"


@dataclass(frozen=True)
class PatchCoordinate:
    group_id: str
    row: int
    col: int


@dataclass(frozen=True)
class StitchPlan:
    """Grid geometry and the filename pattern carrying patch coordinates.

    ``pattern`` must expose named captures ``group``, ``row`` and ``col``.
    """

    rows: int = 3
    cols: int = 4
    pattern: str = DEFAULT_PATTERN
    mask_pattern: str | None = None
    connectivity: int = 4

    def __post_init__(self) -> None:
        if self.rows < 1 or self.cols < 1:
            raise ValueError("grid must have at least one row and one column")


@dataclass
class StitchSummary:
    groups: int = 0
    skipped: list[str] = field(default_factory=list)
    errors: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"groups": self.groups, "skipped": self.skipped, "errors": self.errors}


def parse_coordinate(
    filename: str,
    pattern: str = DEFAULT_PATTERN,
    rows: int | None = None,
    cols: int | None = None,
) -> PatchCoordinate:
    """Extract (group, row, col) from a patch filename.

    Raises ``ValueError`` when the name does not match or the coordinate
    falls outside the grid.
    """
    m = re.match(pattern, filename)
    if m is None:
        raise ValueError(f"{filename!r} does not match pattern {pattern!r}")
    coord = PatchCoordinate(m.group("group"), int(m.group("row")), int(m.group("col")))
    if rows is not None and coord.row >= rows:
        raise ValueError(f"{filename!r}: row {coord.row} outside grid of {rows} rows")
    if cols is not None and coord.col >= cols:
        raise ValueError(f"{filename!r}: col {coord.col} outside grid of {cols} cols")
    return coord


def stitch_group(patches: dict[tuple[int, int], np.ndarray], plan: StitchPlan) -> np.ndarray:
    """Assemble a complete group of patches into one array.

    ``patches`` maps (row, col) to same-shaped arrays. Pixel (y, x) of patch
    (r, c) lands at (r*patch_h + y, c*patch_w + x).
    """
    expected = {(r, c) for r in range(plan.rows) for c in range(plan.cols)}
    missing = expected - set(patches)
    if missing:
        raise ValueError(f"missing patches at {sorted(missing)}")
    extra = set(patches) - expected
    if extra:
        raise ValueError(f"patches outside the grid at {sorted(extra)}")

    shapes = {p.shape for p in patches.values()}
    if len(shapes) != 1:
        raise ValueError(f"patch dimensions differ: {sorted(shapes)}")
    ph, pw = next(iter(shapes))[:2]

    first = next(iter(patches.values()))
    out_shape = (plan.rows * ph, plan.cols * pw) + first.shape[2:]
    out = np.zeros(out_shape, dtype=first.dtype)
    for (r, c), patch in patches.items():
        out[r * ph : (r + 1) * ph, c * pw : (c + 1) * pw] = patch
    return out


def split_grid(image: np.ndarray, rows: int, cols: int) -> dict[tuple[int, int], np.ndarray]:
    """Inverse of :func:`stitch_group`: cut an image back into its grid patches."""
    h, w = image.shape[:2]
    if h % rows or w % cols:
        raise ValueError(f"{h}x{w} image does not divide into a {rows}x{cols} grid")
    ph, pw = h // rows, w // cols
    return {
        (r, c): image[r * ph : (r + 1) * ph, c * pw : (c + 1) * pw].copy()
        for r in range(rows)
        for c in range(cols)
    }


def stitch_dataset(
    input_dir: str | Path,
    plan: StitchPlan,
    output_dir: str | Path,
) -> StitchSummary:
    """Stitch every complete patch group found in ``input_dir``.

    Image patches are matched by ``plan.pattern`` and written as
    ``<group>.png``; when ``plan.mask_pattern`` is set, matching label-mask
    patches are stitched in parallel, relabeled across seams, and written as
    ``<group>_mask.tif``. Incomplete groups are skipped and reported; I/O
    failures are collected per file rather than aborting the run.
    """
    input_dir = Path(input_dir)
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    summary = StitchSummary()

    image_files: dict[str, dict[tuple[int, int], Path]] = {}
    mask_files: dict[str, dict[tuple[int, int], Path]] = {}

    for path in sorted(input_dir.iterdir()):
        if not path.is_file():
            continue
        target, pattern = image_files, plan.pattern
        if plan.mask_pattern and re.match(plan.mask_pattern, path.name):
            target, pattern = mask_files, plan.mask_pattern
        try:
            coord = parse_coordinate(path.name, pattern, plan.rows, plan.cols)
        except ValueError:
            continue
        slots = target.setdefault(coord.group_id, {})
        key = (coord.row, coord.col)
        if key in slots:
            summary.errors.append(
                f"duplicate coordinate {key} in group {coord.group_id!r}: "
                f"{slots[key].name} vs {path.name}"
            )
            continue
        slots[key] = path

    per_group = plan.rows * plan.cols
    for group, slots in sorted(image_files.items()):
        if len(slots) != per_group:
            summary.skipped.append(
                f"{group}: {len(slots)}/{per_group} image patches present"
            )
            continue
        try:
            patches = {k: _load_patch(p) for k, p in slots.items()}
            stitched = stitch_group(patches, plan)
            _write_image(stitched, output_dir / f"{group}.png")
        except Exception as exc:
            summary.errors.append(f"{group}: {exc}")
            continue

        mask_slots = mask_files.get(group)
        if plan.mask_pattern:
            if not mask_slots or len(mask_slots) != per_group:
                have = len(mask_slots) if mask_slots else 0
                summary.skipped.append(
                    f"{group}: {have}/{per_group} mask patches present"
                )
            else:
                try:
                    masks = {
                        k: mask_io.read_label_mask(p) for k, p in mask_slots.items()
                    }
                    assembled = stitch_group(masks, plan)
                    unified = label_components(assembled > 0, plan.connectivity)
                    mask_io.write_label_mask(unified, output_dir / f"{group}_mask.tif")
                except Exception as exc:
                    summary.errors.append(f"{group} mask: {exc}")

        summary.groups += 1

    return summary


def _load_patch(path: Path) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as im:
        return np.asarray(im)


def _write_image(arr: np.ndarray, path: Path) -> None:
    import os

    from PIL import Image

    tmp = path.with_name(path.name + ".tmp")
    Image.fromarray(arr).save(tmp, format="PNG")
    os.replace(tmp, path)
