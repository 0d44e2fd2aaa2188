"""Exception hierarchy for elcapture.

Every operational failure maps to one of these classes so the CLI can
translate error classes into distinct exit codes.
"""


class ELCaptureError(Exception):
    """Base class for all elcapture errors."""

    exit_code = 1


class DatasetValidationError(ELCaptureError):
    """Input data violates the dataset contract.

    Carries the full list of violations so callers can report every
    offending row at once.
    """

    exit_code = 2

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class EmptyCompleteCasesError(DatasetValidationError):
    """No rows with the missing-prone covariate block observed (m = 0)."""

    def __init__(self):
        super().__init__(["dataset has no complete cases (m = 0)"])


class InconsistentDimensionsError(DatasetValidationError):
    exit_code = 2


class MissingYError(ELCaptureError):
    """A covariate stack was requested for a row whose y block is absent."""

    exit_code = 2


class CSVFormatError(ELCaptureError):
    """Malformed input file; message names the offending row and column."""

    exit_code = 2


class MissingnessFitError(ELCaptureError):
    exit_code = 3


class DegenerateResponseError(MissingnessFitError):
    """All missingness indicators equal; the logistic MLE does not exist."""


class SeparationError(MissingnessFitError):
    """Perfect separation: the logistic likelihood is unbounded."""


class SingularHessianError(MissingnessFitError):
    """Rank-deficient Hessian during the step-one Newton iteration."""


class NoInteriorRootError(ELCaptureError):
    """All constraint deviations are one-signed; no Lagrange multiplier exists."""

    exit_code = 4


class InfeasibleParametersError(ELCaptureError):
    """(beta, alpha) point where the EL constraint set is empty."""

    exit_code = 4


class NonConvergenceError(ELCaptureError):
    """Optimizer stopped without meeting the stationarity tolerance."""

    exit_code = 4


class DegenerateSupportError(ELCaptureError):
    """Conditional capture distribution puts all mass on zero."""

    exit_code = 4


class SingularBlockError(ELCaptureError):
    exit_code = 5


class SingularUError(ELCaptureError):
    exit_code = 5


class NonNegativeDefiniteError(ELCaptureError):
    """Hessian of the profile objective is not negative definite at the fit."""

    exit_code = 5


class ZeroDenominatorError(ELCaptureError):
    exit_code = 5


class BootstrapFailureError(ELCaptureError):
    """Too many bootstrap replicates failed to converge."""

    exit_code = 6


class TooManyFailuresError(ELCaptureError):
    """Too many simulation replicates failed to converge."""

    exit_code = 6


class ConfigError(ELCaptureError):
    exit_code = 7
