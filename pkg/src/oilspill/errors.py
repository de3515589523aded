"""Exception types raised across the detection pipeline."""


class OilSpillError(Exception):
    """Base class for every error this package raises deliberately."""


# --- raster / header IO ---

class MissingField(OilSpillError):
    """A required header field is absent."""


class UnsupportedValue(OilSpillError):
    """A header field holds a value outside the supported set."""


class SizeMismatch(OilSpillError):
    """Binary payload size disagrees with the declared dimensions."""


class NonFiniteValue(OilSpillError):
    """NaN or infinity encountered where finite values are required."""


class IoFailure(OilSpillError):
    """Underlying file read/write failed."""


# --- scene generation ---

class InvalidSpec(OilSpillError):
    """Scene parameters violate their invariants."""


# --- band screening ---

class TooSmall(OilSpillError):
    """Band is smaller than the 3x3 estimator mask allows."""


class AllBandsDropped(OilSpillError):
    """Noise screening rejected every band; the cube is pathological."""


# --- kernel PCA ---

class DegenerateSample(OilSpillError):
    """All subsample spectra are identical; no bandwidth can be derived."""


class DimensionMismatch(OilSpillError):
    """Input feature dimension differs from the fitted model's."""


# --- isolation forest ---

class InsufficientPixels(OilSpillError):
    """Fewer pixels than the requested tree subsample size."""


# --- pseudo labelling ---

class DegenerateScores(OilSpillError):
    """Every score is identical; two clusters cannot be formed."""


class EmptyCluster(OilSpillError):
    """A cluster id has no members."""


class MissingClass(OilSpillError):
    """A required class has no pixels."""


# --- SVM ---

class SingleClass(OilSpillError):
    """Training labels contain only one class."""


class NoConvergence(OilSpillError):
    """Dual optimization hit its update cap before reaching tolerance."""


class TooFewSamples(OilSpillError):
    """Not enough samples for cross validation."""


# --- random-walker refinement ---

class SolverDiverged(OilSpillError):
    """Conjugate gradient hit its iteration cap above tolerance."""


# --- evaluation ---

class SingleClassTruth(OilSpillError):
    """Reference mask contains only one class; AUC is undefined."""


class MissingReference(OilSpillError):
    """Operation requires a reference mask but none is available."""


class StageError(OilSpillError):
    """Wraps a failure with the pipeline stage it occurred in."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
