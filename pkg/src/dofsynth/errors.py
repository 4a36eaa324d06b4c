"""Exception hierarchy.

Every error raised deliberately by this package derives from
:class:`DofSynthError`. Input-validation failures additionally derive from
:class:`ValueError` so callers can catch them generically.
"""


class DofSynthError(Exception):
    """Base class for all package errors."""


class ValidationError(DofSynthError, ValueError):
    """An input violates a type invariant or operation precondition."""


class DimensionMismatch(ValidationError):
    pass


class NonFiniteValue(ValidationError):
    pass


class NonPositiveDepth(ValidationError):
    pass


class OddDimensions(ValidationError):
    pass


class QuantizedDomain(ValidationError):
    """A linear-domain operation received quantized data."""


class SingularCcm(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


# optics
class PsfGridError(ValidationError):
    pass


class MalformedHeader(PsfGridError):
    pass


class NormalizationOutOfRange(PsfGridError):
    pass


class NonOddKernel(PsfGridError):
    pass


class SigmaOutOfRange(ValidationError):
    pass


# render
class EvenKernel(ValidationError):
    pass


class WeightStackMismatch(ValidationError):
    pass


class ImageTooLarge(ValidationError):
    pass


# sensor
class IsoOutOfRange(ValidationError):
    pass


class NegativeVariance(ValidationError):
    pass


# dataprep
class DegenerateRange(ValidationError):
    pass


class PatchOutOfBounds(ValidationError):
    pass


class CropLargerThanImage(ValidationError):
    pass


class MalformedShard(DofSynthError):
    pass


class EmptyDataset(DofSynthError):
    pass


# metrics
class ImageTooSmall(ValidationError):
    pass


class ConfigHashMismatch(UserWarning):
    """A shard was written under a different configuration than expected."""
