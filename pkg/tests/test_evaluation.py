import math

import numpy as np
import pytest

from grainkit.evaluation import (
    IOU_THRESHOLDS,
    EvalReport,
    ap_curve,
    average_precision,
    boundary_f1,
    boundary_pixels,
    count_error,
    evaluate_pair,
    instance_iou_matrix,
    mape,
    match_instances,
    robustness_sweep,
)
from grainkit.mask_io import Calibration
from grainkit.synth import Degradation, SynthSpec, degrade, generate_voronoi
from oracles import brute_boundary_distance, brute_max_matching, random_label_mask


def _voronoi(seed, size=128, seeds=80):
    labels, _ = generate_voronoi(
        SynthSpec(width=size, height=size, n_seeds=seeds, rng_seed=seed, boundary_thickness=0)
    )
    return labels


# --- IoU matrix ---


def test_iou_identical_masks_diagonal():
    mask = _voronoi(1)
    m = instance_iou_matrix(mask, mask)
    assert m.gt_count == m.pred_count == 80
    for (g, p), v in m.pairs.items():
        if g == p:
            assert v == pytest.approx(1.0)
    assert sum(1 for (g, p) in m.pairs if g == p) == 80


def test_iou_disjoint_masks_empty():
    a = np.zeros((10, 10), dtype=np.uint16)
    b = np.zeros((10, 10), dtype=np.uint16)
    a[0:3, 0:3] = 1
    b[6:9, 6:9] = 1
    m = instance_iou_matrix(a, b)
    assert m.pairs == {}
    assert m.gt_count == m.pred_count == 1


def test_iou_toy_overlap():
    # gt 4x4 square (16 px), pred 4x4 square shifted to overlap 8 px:
    # IoU = 8 / (16 + 16 - 8) = 1/3.
    gt = np.zeros((10, 10), dtype=np.uint16)
    pred = np.zeros((10, 10), dtype=np.uint16)
    gt[2:6, 2:6] = 1
    pred[2:6, 4:8] = 1
    m = instance_iou_matrix(gt, pred)
    assert m.pairs[(1, 1)] == pytest.approx(1 / 3)


def test_iou_dimension_mismatch():
    with pytest.raises(ValueError):
        instance_iou_matrix(
            np.zeros((4, 4), dtype=np.uint16), np.zeros((4, 5), dtype=np.uint16)
        )


# --- matching ---


def test_match_identical():
    mask = _voronoi(2)
    m = instance_iou_matrix(mask, mask)
    for tau in IOU_THRESHOLDS:
        res = match_instances(m, tau)
        assert res.tp == 80 and res.fp == 0 and res.fn == 0


def test_match_empty_pred():
    gt = _voronoi(3)
    res = match_instances(instance_iou_matrix(gt, np.zeros_like(gt)), 0.5)
    assert res.tp == 0 and res.fn == 80 and res.fp == 0


def test_match_one_to_one_invariants():
    rng = np.random.default_rng(5)
    for _ in range(25):
        gt = random_label_mask(rng, n_blobs=int(rng.integers(1, 7)))
        pred = random_label_mask(rng, n_blobs=int(rng.integers(1, 7)))
        m = instance_iou_matrix(gt, pred)
        res = match_instances(m, 0.5)
        assert res.tp == len(res.matches)
        assert res.fp == m.pred_count - res.tp
        assert res.fn == m.gt_count - res.tp
        assert len({g for g, _, _ in res.matches}) == res.tp
        assert len({p for _, p, _ in res.matches}) == res.tp
        assert all(v >= 0.5 for _, _, v in res.matches)


def test_match_equals_exhaustive_assignment():
    rng = np.random.default_rng(6)
    for _ in range(40):
        gt = random_label_mask(rng, n_blobs=int(rng.integers(1, 9)))
        pred = random_label_mask(rng, n_blobs=int(rng.integers(1, 9)))
        m = instance_iou_matrix(gt, pred)
        for tau in (0.5, 0.6, 0.75):
            got = match_instances(m, tau).tp
            want = brute_max_matching(
                [(g, p, v) for (g, p), v in m.pairs.items() if v >= tau]
            )
            assert got == want


# --- AP ---


def test_ap_formula():
    from grainkit.evaluation import MatchResult

    assert average_precision(MatchResult(0.5, 8, 1, 1, [])) == pytest.approx(0.8)


def test_ap_identical_masks():
    mask = _voronoi(7)
    aps = ap_curve(mask, mask)
    assert all(v == 1.0 for v in aps.values())


def test_ap_vacuous_empty_pair():
    empty = np.zeros((8, 8), dtype=np.uint16)
    aps = ap_curve(empty, empty)
    assert all(v == 1.0 for v in aps.values())


def test_ap_single_instance_iou_060():
    # 20-wide strip shifted by 5: inter 15, union 25, IoU 0.6 exactly.
    gt = np.zeros((8, 30), dtype=np.uint16)
    pred = np.zeros((8, 30), dtype=np.uint16)
    gt[2:6, 0:20] = 1
    pred[2:6, 5:25] = 1
    m = instance_iou_matrix(gt, pred)
    assert m.pairs[(1, 1)] == pytest.approx(0.6)
    aps = ap_curve(gt, pred)
    assert aps[0.50] == 1.0 and aps[0.55] == 1.0 and aps[0.60] == 1.0
    assert aps[0.65] == 0.0
    assert float(np.mean(list(aps.values()))) == pytest.approx(0.3)


def test_ap_anti_monotone_and_map_bound():
    rng = np.random.default_rng(8)
    for _ in range(20):
        gt = random_label_mask(rng, n_blobs=5)
        pred = random_label_mask(rng, n_blobs=5)
        aps = ap_curve(gt, pred)
        values = [aps[t] for t in IOU_THRESHOLDS]
        assert all(a >= b for a, b in zip(values, values[1:]))
        assert float(np.mean(values)) <= aps[0.5]


# --- boundary F1 ---


def test_boundary_f1_identical():
    mask = _voronoi(9)
    assert boundary_f1(mask, mask) == 1.0


def test_boundary_f1_empty_cases():
    empty = np.zeros((8, 8), dtype=np.uint16)
    blob = empty.copy()
    blob[2:5, 2:5] = 1
    assert boundary_f1(empty, empty) == 1.0
    assert boundary_f1(blob, empty) == 0.0
    assert boundary_f1(empty, blob) == 0.0


def test_boundary_f1_shift_by_tolerance_is_one():
    # gt edge at column 6|7, pred edge at 8|9: every boundary pixel within 2.
    gt = np.zeros((12, 30), dtype=np.uint16)
    pred = np.zeros((12, 30), dtype=np.uint16)
    gt[:, 0:7] = 1
    pred[:, 0:9] = 1
    assert boundary_f1(gt, pred, tolerance=2) == 1.0


def test_boundary_f1_shift_beyond_tolerance_is_zero():
    # gt boundary columns {6,7}, pred {10,11}: min separation 3 > tolerance 2.
    gt = np.zeros((12, 30), dtype=np.uint16)
    pred = np.zeros((12, 30), dtype=np.uint16)
    gt[:, 0:7] = 1
    pred[:, 0:11] = 1
    assert boundary_f1(gt, pred, tolerance=2) == 0.0


def test_boundary_f1_symmetric():
    rng = np.random.default_rng(10)
    for _ in range(10):
        a = random_label_mask(rng)
        b = random_label_mask(rng)
        assert boundary_f1(a, b) == pytest.approx(boundary_f1(b, a))


def test_boundary_f1_matches_brute_distances():
    rng = np.random.default_rng(11)
    for _ in range(5):
        a = random_label_mask(rng, size=20)
        b = random_label_mask(rng, size=20)
        tol = 2.0
        got = boundary_f1(a, b, tol)
        ab, bb = boundary_pixels(a), boundary_pixels(b)
        prec_d = brute_boundary_distance(bb, ab)
        rec_d = brute_boundary_distance(ab, bb)
        p = np.mean([d <= tol for d in prec_d])
        r = np.mean([d <= tol for d in rec_d])
        want = 0.0 if p + r == 0 else 2 * p * r / (p + r)
        assert got == pytest.approx(want)


# --- count error / MAPE ---


def test_count_error_cases():
    gt = _voronoi(12, seeds=40)
    assert count_error(gt, gt) == 0
    merged = degrade(gt, Degradation(merge_fraction=5 / 40, rng_seed=0))
    assert count_error(gt, merged) == -5
    split = degrade(gt, Degradation(split_fraction=2 / 40, rng_seed=0))
    assert count_error(gt, split) == 2


def test_mape_values():
    assert mape([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert mape([110.0], [100.0]) == pytest.approx(10.0)
    assert mape([90.0, 110.0], [100.0, 100.0]) == pytest.approx(10.0)


def test_mape_errors():
    with pytest.raises(ValueError):
        mape([1.0], [0.0])
    with pytest.raises(ValueError):
        mape([1.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        mape([], [])


def test_mape_scale_invariant():
    rng = np.random.default_rng(14)
    pred = list(rng.uniform(1, 10, 20))
    gt = list(rng.uniform(1, 10, 20))
    base = mape(pred, gt)
    for k in (0.25, 7.0):
        assert mape([k * p for p in pred], [k * g for g in gt]) == pytest.approx(base)


# --- evaluate_pair / robustness ---


def test_evaluate_pair_perfect_prediction():
    mask = _voronoi(15)
    rec = evaluate_pair(mask, mask, target=20, name="x")
    assert rec.ap50 == 1.0 and rec.map_50_95 == 1.0
    assert rec.boundary_f1 == 1.0
    assert rec.count_error == 0
    for fld in ("n_inside", "n_intercepted", "n_a", "g"):
        ape = rec.ape(fld)
        assert ape == 0.0 or ape is None


def test_evaluate_pair_modes_coincide_on_identical():
    mask = _voronoi(16)
    a = evaluate_pair(mask, mask, target=20, circle_mode="gt_derived")
    b = evaluate_pair(mask, mask, target=20, circle_mode="gt_free")
    assert a.pred == b.pred and a.gt == b.gt


def test_evaluate_pair_degraded_merges():
    mask = _voronoi(17, size=192, seeds=150)
    merged = degrade(mask, Degradation(merge_fraction=0.2, rng_seed=1))
    rec = evaluate_pair(mask, merged, target=30)
    assert rec.count_error < 0
    assert rec.ape("n_inside") is not None and rec.ape("n_inside") > 0


def test_evaluate_pair_rejects_bad_mode():
    mask = _voronoi(18)
    with pytest.raises(ValueError):
        evaluate_pair(mask, mask, circle_mode="sideways")


def test_robustness_perfect_predictions():
    pairs = [(f"m{i}", _voronoi(20 + i), _voronoi(20 + i)) for i in range(3)]
    table = robustness_sweep(pairs, targets=(10, 20), modes=("gt_derived", "gt_free"))
    assert len(table.rows) == 4
    for row in table.rows:
        assert row.images == 3
        assert row.n_a_mape == pytest.approx(0.0)
        assert row.g_mape == pytest.approx(0.0)
        assert row.pred_count == pytest.approx(row.gt_count)


def test_robustness_gt_side_mode_invariant():
    mask = _voronoi(25, size=192, seeds=150)
    pred = degrade(mask, Degradation(merge_fraction=0.1, rng_seed=2))
    table = robustness_sweep([("m", mask, pred)], targets=(20,))
    derived = table.row(20, "gt_derived")
    free = table.row(20, "gt_free")
    assert derived.gt_n_a == pytest.approx(free.gt_n_a)
    assert derived.gt_g == pytest.approx(free.gt_g)


def test_robustness_unreachable_targets_recorded():
    small = _voronoi(26, size=64, seeds=60)
    table = robustness_sweep([("m", small, small)], targets=(10, 500))
    assert {r.target for r in table.rows} == {10}
    assert any("@500" in e for e in table.errors)


def test_report_aggregates_and_files(tmp_path):
    mask = _voronoi(27)
    rep = EvalReport(records=[evaluate_pair(mask, mask, target=20, name="a")])
    agg = rep.aggregates()
    assert agg["images"] == 1
    assert agg["ap50"] == 1.0
    assert agg["n_a_mape"] == 0.0
    rep.write_csv(tmp_path / "r.csv")
    rep.write_json(tmp_path / "r.json")
    header = (tmp_path / "r.csv").read_text().splitlines()[0]
    for col in ("n_inside_mape", "n_intercepted_mape", "n_a_mape", "g_mape", "ap50"):
        assert col in header
    import json

    payload = json.loads((tmp_path / "r.json").read_text())
    assert payload["aggregates"]["boundary_f1"] == 1.0
    assert math.isclose(payload["per_image"][0]["map_50_95"], 1.0)
