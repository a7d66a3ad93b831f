"""Exception types shared across grainkit."""


class GrainKitError(Exception):
    """Base class for all grainkit errors."""


class MaskFormatError(GrainKitError):
    """A mask file or array violates the label-mask contract."""


class EmptyMaskError(GrainKitError):
    """An operation that needs at least one grain got a mask with none."""


class TargetUnreachableError(GrainKitError):
    """A test circle satisfying the target grain count cannot fit on the canvas."""


class NonPositiveDensityError(GrainKitError):
    """Grain density must be strictly positive to map onto the ASTM scale."""
