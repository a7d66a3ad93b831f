"""grainkit: planimetric grain sizing and instance-mask benchmarking.

Converts instance-labeled micrograph masks into standardized ASTM E112
Jeffries planimetric measurements (grain density N_A and grain size number
G) via dynamic test-circle inscription and spatial calibration, and
benchmarks predicted masks against ground truth with instance-segmentation
and metallurgical error metrics.
"""

from .errors import (
    EmptyMaskError,
    GrainKitError,
    MaskFormatError,
    NonPositiveDensityError,
    TargetUnreachableError,
)
from .evaluation import (
    EvalReport,
    IoUMatrix,
    MatchResult,
    PairRecord,
    RobustnessTable,
    average_precision,
    boundary_f1,
    count_error,
    evaluate_pair,
    instance_iou_matrix,
    mape,
    match_instances,
    robustness_sweep,
)
from .mask_io import (
    Calibration,
    OverlayStyle,
    read_label_mask,
    render_overlay,
    validate_label_mask,
    write_label_mask,
)
from .planimetric import (
    GrainInstance,
    JeffriesResult,
    RadialExtent,
    TestCircle,
    analyze,
    astm_g,
    classify,
    grain_density,
    inscribe_circle,
    instance_index,
    jeffries_multiplier,
    physical_area,
    radial_extents,
)
from .prep import PrepConfig, binarize_interiors, erode, filter_small, label_components, prepare_mask
from .stitch import StitchPlan, parse_coordinate, split_grid, stitch_dataset, stitch_group
from .synth import Degradation, SynthSpec, degrade, generate_voronoi, true_density

__version__ = "0.1.0"

__all__ = [
    "Calibration",
    "Degradation",
    "EmptyMaskError",
    "EvalReport",
    "GrainInstance",
    "GrainKitError",
    "IoUMatrix",
    "JeffriesResult",
    "MaskFormatError",
    "MatchResult",
    "NonPositiveDensityError",
    "OverlayStyle",
    "PairRecord",
    "PrepConfig",
    "RadialExtent",
    "RobustnessTable",
    "StitchPlan",
    "SynthSpec",
    "TargetUnreachableError",
    "TestCircle",
    "analyze",
    "astm_g",
    "average_precision",
    "boundary_f1",
    "binarize_interiors",
    "classify",
    "count_error",
    "degrade",
    "erode",
    "evaluate_pair",
    "filter_small",
    "generate_voronoi",
    "grain_density",
    "inscribe_circle",
    "instance_index",
    "instance_iou_matrix",
    "jeffries_multiplier",
    "label_components",
    "mape",
    "match_instances",
    "parse_coordinate",
    "physical_area",
    "prepare_mask",
    "radial_extents",
    "read_label_mask",
    "render_overlay",
    "robustness_sweep",
    "split_grid",
    "stitch_dataset",
    "stitch_group",
    "true_density",
    "validate_label_mask",
    "write_label_mask",
]
