"""Exception hierarchy shared by every pipeline stage.

Each exception carries the name of the stage that raised it so the CLI can
report ``<stage>: <ErrorName>`` on standard error.
"""


class IrisError(Exception):
    stage = "pipeline"

    def __init__(self, message="", stage=None):
        super().__init__(message)
        if stage is not None:
            self.stage = stage


# imaging
class ImagingError(IrisError):
    stage = "imaging"


class MalformedHeader(ImagingError):
    pass


class TruncatedPayload(ImagingError):
    pass


class IoFailure(ImagingError):
    pass


class CropTooLarge(ImagingError):
    pass


class EvenKernel(ImagingError):
    pass


# segmentation
class SegmentationError(IrisError):
    stage = "segmentation"


class NoBoundaryFound(SegmentationError):
    pass


class SearchRangeInvalid(SegmentationError):
    pass


class DimensionMismatch(SegmentationError):
    pass


class InvalidCircles(SegmentationError):
    pass


# normalization
class NormalizationError(IrisError):
    stage = "normalization"


class EmptyMask(NormalizationError):
    pass


# encoding
class EncodingError(IrisError):
    stage = "encoding"


class MalformedFilterFile(EncodingError):
    pass


class EvenKernelSide(EncodingError):
    pass


class ShapeMismatch(EncodingError):
    pass


class InsufficientOverlap(EncodingError):
    pass


class MalformedTemplateFile(EncodingError):
    pass


# pad3d
class Pad3DError(IrisError):
    stage = "pad3d"


class TooFewValidPixels(Pad3DError):
    pass


# pad2d
class Pad2DError(IrisError):
    stage = "pad2d"


class MissingFilterBank(Pad2DError):
    pass


class SingleClassTrainingSet(Pad2DError):
    pass


class MalformedModelFile(Pad2DError):
    pass


# evalmetrics
class MetricsError(IrisError):
    stage = "eval"


class DegenerateDistributions(MetricsError):
    pass


class UnreachableOperatingPoint(MetricsError):
    pass


class EmptyClass(MetricsError):
    pass


# synthgen
class InvalidSpec(IrisError):
    stage = "synth"


# cli
class EmptyManifest(IrisError):
    stage = "bench"


class ConfigError(IrisError):
    stage = "config"
