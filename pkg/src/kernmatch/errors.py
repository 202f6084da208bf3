"""Exception hierarchy.

Everything raised on bad data or a failed fit derives from
:class:`EstimationError`, so resampling code can retry on exactly these.
"""


class EstimationError(ValueError):
    """Base class for data- or fit-related failures."""


class DegenerateTreatmentError(EstimationError):
    """All units treated, or all units control."""


class SeparationError(EstimationError):
    """Logistic MLE diverges (perfect or quasi-perfect separation)."""


class DenominatorUnderflow(EstimationError):
    """A kernel donor-weight sum vanished for some unit."""


class DegenerateScoreError(EstimationError):
    """A propensity score equal to exactly 0 or 1 where weights need 1/p or 1/(1-p)."""


class RankError(EstimationError):
    """Rank-deficient least-squares design."""


class BootstrapDegenerateError(EstimationError):
    """Too many bootstrap replicates failed."""


class DataFormatError(ValueError):
    """An input file is missing, empty, or has a malformed header or cell."""
