"""Exception types shared across the engine."""


class UhisimError(Exception):
    """Base class for all engine errors."""


class GeoMismatch(UhisimError):
    """Grids that must share dims/georef do not."""


class DuplicateRole(UhisimError):
    """A band role appears more than once in a stack."""


class MissingBand(UhisimError):
    """A required band role is absent from a stack or record."""


class EmptyOverlap(UhisimError):
    """Source and target raster extents are disjoint."""


class PatchTooLarge(UhisimError):
    """Requested patch size exceeds a grid dimension."""


class OverlapConflict(UhisimError):
    """Two patches wrote differing values to the same pixel."""


class UnitMismatch(UhisimError):
    """Operation received a grid in the wrong units."""


class UnsupportedFormat(UhisimError):
    """File is recognized but uses an unsupported variant (BigTIFF, codec...)."""


class CorruptFile(UhisimError):
    """File structure is internally inconsistent."""


class MissingGeoTags(UhisimError):
    """Raster file carries no georeferencing tags."""


class DuplicateScene(UhisimError):
    """Two catalog entries share a scene id."""


class DateMismatch(UhisimError):
    """Paired scene records disagree on acquisition date."""


class EmptyCatalog(UhisimError):
    """Split requested over a catalog with no samples."""


class EmptySplit(UhisimError):
    """Training requested with an empty train set."""


class DegenerateDistribution(UhisimError):
    """Percentile split impossible: all statistics identical."""


class NoValidPixels(UhisimError):
    """Metric window contains no valid (non-nodata, in-mask) pixels."""


class ShapeMismatch(UhisimError):
    """Tensor or grid shapes incompatible with the model config."""


class NonFiniteLoss(UhisimError):
    """Loss or gradient became NaN/inf; the step is aborted."""


class BboxOutOfBounds(UhisimError):
    """Scenario bbox extends beyond the sample extent."""


class ClassAbsent(UhisimError):
    """Requested LULC class has no pixels in the grid."""


class UnreachableTarget(UhisimError):
    """Index retarget requires reflectance outside [0, 1]."""


class MissingHorizon(UhisimError):
    """Forcing record has no grid for the requested year."""


class UnknownSample(UhisimError):
    """Scenario references a sample id absent from the store."""


class UnknownCheckpoint(UhisimError):
    """Scenario references a model checkpoint absent from the store."""


class StoreError(UhisimError):
    """Persistence layer I/O failure."""
