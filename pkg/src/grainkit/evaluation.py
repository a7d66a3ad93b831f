"""Benchmark prediction masks against ground truth.

Segmentation quality is scored by instance matching at IoU thresholds
(AP@0.50 and mAP over 0.50-0.95), boundary F1 within a pixel tolerance, and
signed instance count error. Metallurgical quality compares the planimetric
measurements of both masks, per field and as mean absolute percentage errors
over a dataset.

AP here is TP/(TP+FP+FN) per threshold (the convention of cell-segmentation
benchmarks), not the COCO precision-recall area. Matching is greedy by
descending IoU, which is exact for thresholds >= 0.5 because two instances
cannot both overlap a third by more than half.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import planimetric
from .errors import TargetUnreachableError
from .mask_io import Calibration, validate_label_mask
from .planimetric import JeffriesResult, TestCircle

IOU_THRESHOLDS = tuple(i / 100 for i in range(50, 100, 5))

JEFFRIES_FIELDS = ("n_inside", "n_intercepted", "n_a", "g")

MODES = ("gt_derived", "gt_free")


@dataclass(frozen=True)
class IoUMatrix:
    """Sparse pairwise IoU between ground-truth and predicted instances."""

    pairs: dict[tuple[int, int], float]
    gt_count: int
    pred_count: int


@dataclass(frozen=True)
class MatchResult:
    threshold: float
    tp: int
    fp: int
    fn: int
    matches: list[tuple[int, int, float]]


def instance_iou_matrix(gt: np.ndarray, pred: np.ndarray) -> IoUMatrix:
    """IoU of every overlapping (gt, pred) instance pair.

    Background (label 0) never participates. Non-overlapping pairs are not
    materialized.
    """
    gt = validate_label_mask(gt)
    pred = validate_label_mask(pred)
    if gt.shape != pred.shape:
        raise ValueError(f"mask dimensions differ: {gt.shape} vs {pred.shape}")

    gt_areas = np.bincount(gt.ravel())
    pred_areas = np.bincount(pred.ravel())
    gt_count = int((gt_areas[1:] > 0).sum())
    pred_count = int((pred_areas[1:] > 0).sum())

    overlap = (gt > 0) & (pred > 0)
    pairs: dict[tuple[int, int], float] = {}
    if overlap.any():
        g = gt[overlap].astype(np.int64)
        p = pred[overlap].astype(np.int64)
        codes, counts = np.unique(g * (int(pred.max()) + 1) + p, return_counts=True)
        gids, pids = np.divmod(codes, int(pred.max()) + 1)
        for gid, pid, inter in zip(gids, pids, counts):
            union = gt_areas[gid] + pred_areas[pid] - inter
            pairs[(int(gid), int(pid))] = float(inter / union)
    return IoUMatrix(pairs, gt_count, pred_count)


def match_instances(iou: IoUMatrix, threshold: float) -> MatchResult:
    """One-to-one matching among pairs with IoU >= threshold, greedy by IoU."""
    candidates = sorted(
        ((v, g, p) for (g, p), v in iou.pairs.items() if v >= threshold),
        key=lambda t: (-t[0], t[1], t[2]),
    )
    used_gt: set[int] = set()
    used_pred: set[int] = set()
    matches: list[tuple[int, int, float]] = []
    for v, g, p in candidates:
        if g in used_gt or p in used_pred:
            continue
        used_gt.add(g)
        used_pred.add(p)
        matches.append((g, p, v))
    tp = len(matches)
    return MatchResult(threshold, tp, iou.pred_count - tp, iou.gt_count - tp, matches)


def average_precision(match: MatchResult) -> float:
    """TP / (TP + FP + FN); vacuously 1.0 when both masks are empty."""
    denom = match.tp + match.fp + match.fn
    if denom == 0:
        return 1.0
    return match.tp / denom


def ap_curve(
    gt: np.ndarray, pred: np.ndarray, thresholds=IOU_THRESHOLDS
) -> dict[float, float]:
    """AP at each threshold, sharing one IoU matrix."""
    matrix = instance_iou_matrix(gt, pred)
    return {t: average_precision(match_instances(matrix, t)) for t in thresholds}


def boundary_pixels(mask: np.ndarray) -> np.ndarray:
    """Pixels with a 4-neighbor of different label, background included."""
    boundary = np.zeros(mask.shape, dtype=bool)
    boundary[:-1, :] |= mask[:-1, :] != mask[1:, :]
    boundary[1:, :] |= mask[1:, :] != mask[:-1, :]
    boundary[:, :-1] |= mask[:, :-1] != mask[:, 1:]
    boundary[:, 1:] |= mask[:, 1:] != mask[:, :-1]
    return boundary


def boundary_f1(gt: np.ndarray, pred: np.ndarray, tolerance: float = 2.0) -> float:
    """Harmonic mean of boundary precision/recall within a pixel tolerance.

    A predicted boundary pixel is correct when some true boundary pixel lies
    within ``tolerance`` (Euclidean); recall is symmetric. Returns 1.0 when
    both boundary sets are empty, 0.0 when exactly one is.
    """
    gt = validate_label_mask(gt)
    pred = validate_label_mask(pred)
    if gt.shape != pred.shape:
        raise ValueError(f"mask dimensions differ: {gt.shape} vs {pred.shape}")

    gt_b = boundary_pixels(gt)
    pred_b = boundary_pixels(pred)
    if not gt_b.any() and not pred_b.any():
        return 1.0
    if not gt_b.any() or not pred_b.any():
        return 0.0

    dist_to_gt = ndimage.distance_transform_edt(~gt_b)
    dist_to_pred = ndimage.distance_transform_edt(~pred_b)
    precision = float((dist_to_gt[pred_b] <= tolerance).mean())
    recall = float((dist_to_pred[gt_b] <= tolerance).mean())
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def instance_count(mask: np.ndarray) -> int:
    ids = np.unique(mask)
    return int((ids > 0).sum())


def count_error(gt: np.ndarray, pred: np.ndarray) -> int:
    """Signed count difference, predicted minus true; negative = under-segmented."""
    return instance_count(pred) - instance_count(gt)


def mape(pred: list[float], gt: list[float]) -> float:
    """Mean absolute percentage error, in percent."""
    if len(pred) != len(gt):
        raise ValueError(f"length mismatch: {len(pred)} vs {len(gt)}")
    if not gt:
        raise ValueError("empty inputs")
    if any(g == 0 for g in gt):
        raise ValueError("ground-truth values must be nonzero")
    return 100.0 * float(np.mean([abs(p - g) / abs(g) for p, g in zip(pred, gt)]))


def _ape(pred: float, gt: float) -> float | None:
    """Absolute percentage error of one value, None when undefined."""
    if gt == 0 or math.isnan(gt) or math.isnan(pred):
        return None
    return 100.0 * abs(pred - gt) / abs(gt)


@dataclass
class PairRecord:
    """Full evaluation of one (ground truth, prediction) mask pair."""

    name: str
    mode: str
    target: int
    ap: dict[float, float]
    boundary_f1: float
    count_error: int
    gt: JeffriesResult
    pred: JeffriesResult

    @property
    def ap50(self) -> float:
        return self.ap[0.5]

    @property
    def map_50_95(self) -> float:
        return float(np.mean(list(self.ap.values())))

    def ape(self, fld: str) -> float | None:
        return _ape(getattr(self.pred, fld), getattr(self.gt, fld))

    def as_row(self) -> dict:
        row = {
            "name": self.name,
            "mode": self.mode,
            "target": self.target,
            "ap50": self.ap50,
            "map_50_95": self.map_50_95,
            "boundary_f1": self.boundary_f1,
            "count_error": self.count_error,
        }
        for fld in JEFFRIES_FIELDS:
            row[f"{fld}_gt"] = getattr(self.gt, fld)
            row[f"{fld}_pred"] = getattr(self.pred, fld)
            row[f"{fld}_mape"] = self.ape(fld)
        return row


def evaluate_pair(
    gt: np.ndarray,
    pred: np.ndarray,
    cal: Calibration = Calibration(),
    target: int = 60,
    circle_mode: str = "gt_derived",
    boundary_tolerance: float = 2.0,
    thresholds=IOU_THRESHOLDS,
    name: str = "",
) -> PairRecord:
    """Score one prediction against its ground truth.

    ``circle_mode`` selects how the prediction's test circle is placed:
    ``gt_derived`` superimposes the circle inscribed on the ground truth,
    ``gt_free`` inscribes an independent circle on the prediction.
    """
    gt = validate_label_mask(gt)
    pred = validate_label_mask(pred)
    if gt.shape != pred.shape:
        raise ValueError(f"mask dimensions differ: {gt.shape} vs {pred.shape}")
    if circle_mode not in MODES:
        raise ValueError(f"circle_mode must be one of {MODES}, got {circle_mode!r}")

    gt_res = planimetric.analyze(gt, cal, target)
    circle = gt_res.circle if circle_mode == "gt_derived" else None
    pred_res = planimetric.analyze(pred, cal, target, circle=circle)

    return PairRecord(
        name=name,
        mode=circle_mode,
        target=target,
        ap=ap_curve(gt, pred, thresholds),
        boundary_f1=boundary_f1(gt, pred, boundary_tolerance),
        count_error=count_error(gt, pred),
        gt=gt_res,
        pred=pred_res,
    )


@dataclass
class EvalReport:
    """Per-image records plus aggregate means."""

    records: list[PairRecord] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)

    def aggregates(self) -> dict:
        if not self.records:
            return {}
        out: dict = {"images": len(self.records)}
        rows = [r.as_row() for r in self.records]
        for key in rows[0]:
            if key in ("name", "mode", "target"):
                continue
            values = [
                row[key]
                for row in rows
                if row[key] is not None and not math.isnan(row[key])
            ]
            out[key] = float(np.mean(values)) if values else None
        return out

    def write_csv(self, path: str | Path) -> None:
        rows = [r.as_row() for r in self.records]
        _write_csv(rows, path)

    def write_json(self, path: str | Path) -> None:
        payload = {
            "aggregates": self.aggregates(),
            "per_image": [r.as_row() for r in self.records],
            "skipped": self.skipped,
        }
        _write_json(payload, path)


@dataclass
class RobustnessRow:
    """Aggregate planimetric accuracy at one (target, circle mode) cell."""

    target: int
    mode: str
    images: int
    gt_count: float
    gt_n_a: float
    gt_g: float
    pred_count: float
    pred_n_a: float
    n_a_mape: float
    pred_g: float
    g_mape: float

    def as_row(self) -> dict:
        return {
            "target": self.target,
            "mode": self.mode,
            "images": self.images,
            "gt_count": self.gt_count,
            "gt_n_a": self.gt_n_a,
            "gt_g": self.gt_g,
            "pred_count": self.pred_count,
            "pred_n_a": self.pred_n_a,
            "n_a_mape": self.n_a_mape,
            "pred_g": self.pred_g,
            "g_mape": self.g_mape,
        }


@dataclass
class RobustnessTable:
    rows: list[RobustnessRow] = field(default_factory=list)
    errors: list[str] = field(default_factory=list)

    def row(self, target: int, mode: str) -> RobustnessRow:
        for r in self.rows:
            if r.target == target and r.mode == mode:
                return r
        raise KeyError((target, mode))

    def write_csv(self, path: str | Path) -> None:
        _write_csv([r.as_row() for r in self.rows], path)

    def write_json(self, path: str | Path) -> None:
        _write_json(
            {"rows": [r.as_row() for r in self.rows], "errors": self.errors}, path
        )


def robustness_sweep(
    pairs: list[tuple[str, np.ndarray, np.ndarray]],
    cal: Calibration = Calibration(),
    targets: tuple[int, ...] = tuple(range(10, 101, 10)),
    modes: tuple[str, ...] = MODES,
) -> RobustnessTable:
    """Planimetric accuracy across target grain counts and circle modes.

    Radial extents are computed once per mask and re-classified at every
    target, so the sweep costs little more than a single evaluation. Images
    where a target is unreachable are excluded from that cell and recorded
    in ``errors``.
    """
    if any(t < 1 for t in targets):
        raise ValueError("targets must be >= 1")
    for m in modes:
        if m not in MODES:
            raise ValueError(f"unknown mode {m!r}")

    prepared = []
    for name, gt, pred in pairs:
        gt = validate_label_mask(gt)
        pred = validate_label_mask(pred)
        if gt.shape != pred.shape:
            raise ValueError(f"{name}: mask dimensions differ")
        center = planimetric.image_center(gt)
        prepared.append(
            (
                name,
                center,
                planimetric.radial_extents(gt, center),
                planimetric.radial_extents(pred, center),
                planimetric.fit_limit(gt.shape, center),
            )
        )

    table = RobustnessTable()
    for target in targets:
        cells: dict[str, list[tuple[JeffriesResult, JeffriesResult]]] = {
            m: [] for m in modes
        }
        for name, center, gt_ext, pred_ext, limit in prepared:
            try:
                r_gt = planimetric.radius_for_target(gt_ext, target, limit)
            except TargetUnreachableError as exc:
                table.errors.append(f"{name}@{target}: {exc}")
                continue
            gt_res = _measure(gt_ext, center, r_gt, cal)
            for mode in modes:
                if mode == "gt_derived":
                    pred_res = _measure(pred_ext, center, r_gt, cal)
                else:
                    try:
                        r_pred = planimetric.radius_for_target(pred_ext, target, limit)
                    except TargetUnreachableError as exc:
                        table.errors.append(f"{name}@{target} ({mode}): {exc}")
                        continue
                    pred_res = _measure(pred_ext, center, r_pred, cal)
                cells[mode].append((gt_res, pred_res))

        for mode in modes:
            results = cells[mode]
            if not results:
                continue
            g_pairs = [
                (p.g, g.g)
                for g, p in results
                if not (math.isnan(g.g) or math.isnan(p.g)) and g.g != 0
            ]
            table.rows.append(
                RobustnessRow(
                    target=target,
                    mode=mode,
                    images=len(results),
                    gt_count=float(np.mean([g.n_inside for g, _ in results])),
                    gt_n_a=float(np.mean([g.n_a for g, _ in results])),
                    gt_g=float(np.mean([g.g for g, _ in results])),
                    pred_count=float(np.mean([p.n_inside for _, p in results])),
                    pred_n_a=float(np.mean([p.n_a for _, p in results])),
                    n_a_mape=mape(
                        [p.n_a for _, p in results], [g.n_a for g, _ in results]
                    ),
                    pred_g=float(np.mean([p.g for _, p in results])),
                    g_mape=mape([p for p, _ in g_pairs], [g for _, g in g_pairs])
                    if g_pairs
                    else math.nan,
                )
            )
    return table


def _measure(
    extents, center: tuple[float, float], radius: float, cal: Calibration
) -> JeffriesResult:
    inside, intercepted, _ = planimetric.classify(extents, radius)
    area = planimetric.physical_area(radius, cal)
    f = 1.0 / area
    n_a = planimetric.grain_density(len(inside), len(intercepted), f)
    g = planimetric.astm_g(n_a) if n_a > 0 else math.nan
    circle = TestCircle(center, radius, area)
    return JeffriesResult(len(inside), len(intercepted), f, n_a, g, circle)


def _write_csv(rows: list[dict], path: str | Path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        if rows:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
            writer.writeheader()
            for row in rows:
                writer.writerow(
                    {
                        k: ""
                        if v is None or (isinstance(v, float) and math.isnan(v))
                        else v
                        for k, v in row.items()
                    }
                )
    os.replace(tmp, path)


def _write_json(payload: dict, path: str | Path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w") as fh:
        json.dump(_jsonable(payload), fh, indent=2)
        fh.write("\n")
    os.replace(tmp, path)


def _jsonable(obj):
    """Recursively coerce numpy scalars and map NaN to null."""
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return None if math.isnan(v) else v
    return obj
