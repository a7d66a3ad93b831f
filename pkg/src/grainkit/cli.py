"""Command-line interface: stitch, prep, analyze, evaluate, robustness, synth.

All commands share one JSON configuration file (every field optional) whose
values individual flags override. Batch commands fan out over a bounded
worker pool; report rows are always ordered by filename so outputs are
deterministic regardless of scheduling.

Exit codes: 0 success, 1 partial or total failure, 2 invalid invocation.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import evaluation, mask_io, planimetric, report, stitch, synth
from .errors import GrainKitError
from .evaluation import _write_csv, _write_json
from .mask_io import Calibration, OverlayStyle
from .prep import PrepConfig, prepare_mask
from .stitch import StitchPlan
from .synth import Degradation, SynthSpec

MASK_SUFFIXES = (".tif", ".tiff", ".png")

ASTM_MIN_WARNING = "below 50-grain minimum"


@dataclass
class EvalConfig:
    boundary_tolerance: float = 2.0
    iou_thresholds: tuple[float, ...] = evaluation.IOU_THRESHOLDS


@dataclass
class RunConfig:
    """Effective configuration of one CLI run."""

    calibration: float = 2.26
    target_grains: int = 60
    circle_mode: str = "gt_derived"
    jobs: int = 1
    prep: PrepConfig = field(default_factory=PrepConfig)
    stitch: StitchPlan = field(default_factory=StitchPlan)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def __post_init__(self) -> None:
        if self.target_grains < 1:
            raise ValueError("target_grains must be >= 1")
        if self.circle_mode not in evaluation.MODES:
            raise ValueError(f"circle_mode must be one of {evaluation.MODES}")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")

    @property
    def cal(self) -> Calibration:
        return Calibration(self.calibration)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["eval"]["iou_thresholds"] = list(self.eval.iou_thresholds)
        return d


def load_config(path: str | Path | None) -> RunConfig:
    """Build a RunConfig from a JSON file; missing fields take defaults."""
    if path is None:
        return RunConfig()
    with open(path) as fh:
        raw = json.load(fh)
    kwargs: dict = {}
    for key in ("calibration", "target_grains", "circle_mode", "jobs"):
        if key in raw:
            kwargs[key] = raw[key]
    if "prep" in raw:
        kwargs["prep"] = PrepConfig(**raw["prep"])
    if "stitch" in raw:
        kwargs["stitch"] = StitchPlan(**raw["stitch"])
    if "eval" in raw:
        ev = dict(raw["eval"])
        if "iou_thresholds" in ev:
            ev["iou_thresholds"] = tuple(ev["iou_thresholds"])
        kwargs["eval"] = EvalConfig(**ev)
    return RunConfig(**kwargs)


def _apply_overrides(cfg: RunConfig, args: argparse.Namespace) -> RunConfig:
    if getattr(args, "calibration", None) is not None:
        cfg = replace(cfg, calibration=args.calibration)
    if getattr(args, "target", None) is not None:
        cfg = replace(cfg, target_grains=args.target)
    if getattr(args, "mode", None) is not None:
        cfg = replace(cfg, circle_mode=args.mode.replace("-", "_"))
    if getattr(args, "jobs", None) is not None:
        cfg = replace(cfg, jobs=args.jobs)
    return cfg


def _dump_effective_config(cfg: RunConfig, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(cfg.as_dict(), out_dir / "effective_config.json")


def _find_masks(root: Path) -> list[Path]:
    return sorted(
        p for p in root.iterdir() if p.is_file() and p.suffix.lower() in MASK_SUFFIXES
    )


def _warn(msg: str) -> None:
    print(f"warning: {msg}", file=sys.stderr)


# ---------------------------------------------------------------------------
# subcommands


def cmd_stitch(args: argparse.Namespace) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    plan = cfg.stitch
    if args.rows is not None or args.cols is not None:
        plan = replace(
            plan,
            rows=args.rows if args.rows is not None else plan.rows,
            cols=args.cols if args.cols is not None else plan.cols,
        )
    if args.pattern is not None:
        plan = replace(plan, pattern=args.pattern)
    if args.mask_pattern is not None:
        plan = replace(plan, mask_pattern=args.mask_pattern)

    summary = stitch.stitch_dataset(args.input, plan, args.output)
    print(json.dumps(summary.as_dict(), indent=2))
    return 1 if summary.errors else 0


def cmd_prep(args: argparse.Namespace) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    prep_cfg = cfg.prep
    if args.threshold is not None:
        prep_cfg = replace(prep_cfg, threshold=args.threshold)
    if args.erosion is not None:
        prep_cfg = replace(prep_cfg, erosion_radius=args.erosion)
    if args.min_area is not None:
        prep_cfg = replace(prep_cfg, min_area=args.min_area)
    if args.connectivity is not None:
        prep_cfg = replace(prep_cfg, connectivity=args.connectivity)

    in_dir, out_dir = Path(args.input), Path(args.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = _find_masks(in_dir)

    def one(path: Path) -> dict:
        try:
            raw = mask_io.read_grayscale(path)
            labels = prepare_mask(raw, prep_cfg)
            out = out_dir / (path.stem + ".tif")
            mask_io.write_label_mask(labels, out)
            return {
                "name": path.name,
                "output": out.name,
                "instances": evaluation.instance_count(labels),
            }
        except Exception as exc:
            return {"name": path.name, "error": str(exc)}

    with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
        results = list(pool.map(one, files))

    failed = [r for r in results if "error" in r]
    print(json.dumps({"processed": len(results), "results": results}, indent=2))
    return 1 if failed else 0


def cmd_synth(args: argparse.Namespace) -> int:
    out_dir = Path(args.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = _apply_overrides(load_config(args.config), args)
    cal = cfg.cal

    degradation = None
    if args.merge_fraction or args.split_fraction:
        degradation = Degradation(
            merge_fraction=args.merge_fraction,
            split_fraction=args.split_fraction,
            rng_seed=args.rng_seed,
        )

    manifest = []
    for i in range(args.count):
        spec = SynthSpec(
            width=args.size,
            height=args.size,
            n_seeds=args.seeds,
            rng_seed=args.rng_seed + i,
            boundary_thickness=args.boundary_thickness,
            degradation=degradation,
        )
        labels, edges, degraded = synth.generate_pair(spec)
        name = f"field_{i:03d}"
        mask_io.write_label_mask(labels, out_dir / f"{name}_labels.tif")
        if spec.boundary_thickness >= 1:
            _write_png(edges, out_dir / f"{name}_edges.png")
        entry = {
            "name": name,
            "width": spec.width,
            "height": spec.height,
            "n_seeds": spec.n_seeds,
            "rng_seed": spec.rng_seed,
            "boundary_thickness": spec.boundary_thickness,
            "true_density_per_mm2": synth.true_density(spec, cal),
            "calibration": cal.pixels_per_micron,
        }
        if degraded is not None:
            mask_io.write_label_mask(degraded, out_dir / f"{name}_degraded.tif")
            entry["degradation"] = {
                "merge_fraction": degradation.merge_fraction,
                "split_fraction": degradation.split_fraction,
                "rng_seed": degradation.rng_seed,
            }
        manifest.append(entry)

    _write_json({"fields": manifest}, out_dir / "manifest.json")
    print(json.dumps({"fields": len(manifest), "output": str(out_dir)}, indent=2))
    return 0


def _write_png(arr: np.ndarray, path: Path) -> None:
    import os

    from PIL import Image

    tmp = path.with_name(path.name + ".tmp")
    Image.fromarray(arr).save(tmp, format="PNG")
    os.replace(tmp, path)


def cmd_analyze(args: argparse.Namespace) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    out_dir = Path(args.output)
    _dump_effective_config(cfg, out_dir)

    files: list[Path] = []
    for entry in args.inputs:
        p = Path(entry)
        files.extend(_find_masks(p) if p.is_dir() else [p])
    files.sort()
    if not files:
        _warn("no input masks found")

    below_minimum = cfg.target_grains < 50
    if below_minimum:
        _warn(
            f"target_grains={cfg.target_grains} is {ASTM_MIN_WARNING}; "
            "sampling bias and counting variance dominate below 50"
        )

    overlay_dir = Path(args.overlay_dir) if args.overlay_dir else None
    if overlay_dir:
        overlay_dir.mkdir(parents=True, exist_ok=True)

    def one(path: Path) -> dict:
        try:
            mask = mask_io.read_label_mask(path)
            result = planimetric.analyze(mask, cfg.cal, cfg.target_grains)
            record = {"name": path.name, **result.as_dict()}
            if below_minimum:
                record["astm_warning"] = ASTM_MIN_WARNING
            if overlay_dir:
                extents = planimetric.radial_extents(mask, result.circle.center)
                inside, intercepted, outside = planimetric.classify(
                    extents, result.circle.radius
                )
                classification = {i: "inside" for i in inside}
                classification.update({i: "intercepted" for i in intercepted})
                classification.update({i: "outside" for i in outside})
                mask_io.render_overlay(
                    None,
                    mask,
                    result.circle,
                    classification,
                    OverlayStyle(),
                    overlay_dir / (path.stem + "_overlay.png"),
                )
            return record
        except (GrainKitError, OSError, ValueError) as exc:
            return {"name": path.name, "error": str(exc)}

    with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
        records = list(pool.map(one, files))

    payload = {"target_grains": cfg.target_grains, "results": records}
    if below_minimum:
        payload["astm_warning"] = ASTM_MIN_WARNING
    if args.format in ("json", "both"):
        _write_json(payload, out_dir / "results.json")
    if args.format in ("csv", "both"):
        rows = [_flatten_analysis(r) for r in records]
        _write_csv(rows, out_dir / "results.csv")
    print(json.dumps(payload, indent=2, default=str))

    failures = [r for r in records if "error" in r]
    for r in failures:
        _warn(f"{r['name']}: {r['error']}")
    # Per-image failures are recorded in the output; only a fully failed
    # batch is an error exit.
    return 1 if files and len(failures) == len(files) else 0


def _flatten_analysis(record: dict) -> dict:
    row = {
        "name": record.get("name", ""),
        "n_inside": record.get("n_inside"),
        "n_intercepted": record.get("n_intercepted"),
        "f": record.get("f"),
        "n_a": record.get("n_a"),
        "g": record.get("g"),
        "error": record.get("error", ""),
    }
    circle = record.get("circle")
    if circle:
        row["circle_cx"], row["circle_cy"] = circle["center"]
        row["circle_radius"] = circle["radius"]
        row["circle_area_mm2"] = circle["physical_area_mm2"]
    else:
        row["circle_cx"] = row["circle_cy"] = None
        row["circle_radius"] = row["circle_area_mm2"] = None
    if "astm_warning" in record:
        row["astm_warning"] = record["astm_warning"]
    return row


def _matched_pairs(gt_dir: Path, pred_dir: Path) -> tuple[list[tuple[str, Path, Path]], list[str]]:
    gt_files = {p.stem: p for p in _find_masks(gt_dir)}
    pred_files = {p.stem: p for p in _find_masks(pred_dir)}
    pairs = [
        (stem, gt_files[stem], pred_files[stem])
        for stem in sorted(gt_files.keys() & pred_files.keys())
    ]
    unmatched = sorted(
        [f"{gt_files[s].name}: no prediction" for s in gt_files.keys() - pred_files.keys()]
        + [f"{pred_files[s].name}: no ground truth" for s in pred_files.keys() - gt_files.keys()]
    )
    return pairs, unmatched


def cmd_evaluate(args: argparse.Namespace) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    out_dir = Path(args.output)
    _dump_effective_config(cfg, out_dir)

    pairs, unmatched = _matched_pairs(Path(args.gt), Path(args.pred))
    for msg in unmatched:
        _warn(msg)

    rep = evaluation.EvalReport(skipped=unmatched)
    errors: list[str] = []

    def one(item: tuple[str, Path, Path]):
        stem, gt_path, pred_path = item
        try:
            gt = mask_io.read_label_mask(gt_path)
            pred = mask_io.read_label_mask(pred_path)
            return evaluation.evaluate_pair(
                gt,
                pred,
                cfg.cal,
                cfg.target_grains,
                cfg.circle_mode,
                cfg.eval.boundary_tolerance,
                cfg.eval.iou_thresholds,
                name=stem,
            )
        except (GrainKitError, OSError, ValueError) as exc:
            return f"{stem}: {exc}"

    with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
        for outcome in pool.map(one, pairs):
            if isinstance(outcome, str):
                errors.append(outcome)
            else:
                rep.records.append(outcome)

    rep.write_csv(out_dir / "report.csv")
    rep.write_json(out_dir / "report.json")
    report.evaluation_figure(rep, out_dir / "report.png")
    print(json.dumps({"aggregates": rep.aggregates(), "errors": errors}, indent=2))
    for e in errors:
        _warn(e)
    return 1 if errors else 0


def cmd_robustness(args: argparse.Namespace) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    out_dir = Path(args.output)
    _dump_effective_config(cfg, out_dir)

    targets = tuple(int(t) for t in args.targets.split(",")) if args.targets else tuple(
        range(10, 101, 10)
    )
    modes = (
        (cfg.circle_mode,) if args.single_mode else evaluation.MODES
    )

    pairs, unmatched = _matched_pairs(Path(args.gt), Path(args.pred))
    for msg in unmatched:
        _warn(msg)

    loaded = []
    errors: list[str] = []
    for stem, gt_path, pred_path in pairs:
        try:
            loaded.append(
                (stem, mask_io.read_label_mask(gt_path), mask_io.read_label_mask(pred_path))
            )
        except (GrainKitError, OSError, ValueError) as exc:
            errors.append(f"{stem}: {exc}")

    table = evaluation.robustness_sweep(loaded, cfg.cal, targets, modes)
    table.errors = errors + table.errors
    table.write_csv(out_dir / "robustness.csv")
    table.write_json(out_dir / "robustness.json")
    report.robustness_figure(table, out_dir / "robustness.png")
    print(
        json.dumps(
            {"rows": [r.as_row() for r in table.rows], "errors": table.errors},
            indent=2,
        )
    )
    return 1 if errors else 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="grainkit",
        description="Planimetric grain sizing and mask benchmarking for micrographs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--calibration", type=float, help="pixels per micron")
        p.add_argument("--target", type=int, help="target grain count for the circle")
        p.add_argument(
            "--mode",
            choices=["gt-derived", "gt-free"],
            help="prediction circle placement",
        )
        p.add_argument("--jobs", type=int, help="worker pool width")

    p = sub.add_parser("stitch", help="reassemble patch grids into full fields")
    add_common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--rows", type=int)
    p.add_argument("--cols", type=int)
    p.add_argument("--pattern", help="regex with named captures group/row/col")
    p.add_argument("--mask-pattern", dest="mask_pattern")
    p.set_defaults(func=cmd_stitch)

    p = sub.add_parser("prep", help="convert edge-annotated masks to label masks")
    add_common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--threshold", type=int)
    p.add_argument("--erosion", type=int)
    p.add_argument("--min-area", dest="min_area", type=int)
    p.add_argument("--connectivity", type=int, choices=[4, 8])
    p.set_defaults(func=cmd_prep)

    p = sub.add_parser("analyze", help="planimetric measurement of label masks")
    add_common(p)
    p.add_argument("inputs", nargs="+", help="mask files or directories")
    p.add_argument("--output", default=".")
    p.add_argument("--overlay-dir", dest="overlay_dir")
    p.add_argument("--format", choices=["csv", "json", "both"], default="both")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("evaluate", help="score predictions against ground truth")
    add_common(p)
    p.add_argument("--gt", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("robustness", help="sweep target grain counts and circle modes")
    add_common(p)
    p.add_argument("--gt", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--targets", help="comma-separated list, default 10..100 step 10")
    p.add_argument(
        "--single-mode",
        action="store_true",
        help="only the configured circle mode instead of both",
    )
    p.set_defaults(func=cmd_robustness)

    p = sub.add_parser("synth", help="generate synthetic Voronoi grain fields")
    add_common(p)
    p.add_argument("--output", required=True)
    p.add_argument("--seeds", type=int, default=500)
    p.add_argument("--size", type=int, default=2048)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--rng-seed", dest="rng_seed", type=int, default=0)
    p.add_argument(
        "--boundary-thickness", dest="boundary_thickness", type=int, default=1
    )
    p.add_argument("--merge-fraction", dest="merge_fraction", type=float, default=0.0)
    p.add_argument("--split-fraction", dest="split_fraction", type=float, default=0.0)
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (GrainKitError, OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
