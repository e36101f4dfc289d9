"""Exception hierarchy shared across the toolkit.

Every error the library raises deliberately derives from :class:`VedflowError`,
so callers (notably the CLI) can map failure categories to exit codes without
matching on message strings.
"""


class VedflowError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(VedflowError, ValueError):
    """Invalid configuration value, unknown option, or malformed config file."""


class DimensionError(VedflowError, ValueError):
    """Array shapes or sizes violate an operation's contract."""


class StatisticsError(VedflowError, ValueError):
    """Too few samples to compute the requested statistic."""


class WellPosednessError(VedflowError, ValueError):
    """The flow problem has no unique solution (e.g. no Dirichlet boundary)."""


class DegenerateDataError(VedflowError, ValueError):
    """Data carries no usable signal (e.g. zero explained variance)."""


class NumericalError(VedflowError, RuntimeError):
    """A numerical routine failed or produced non-finite values."""


class DecompositionError(NumericalError):
    """A matrix factorization failed; message carries conditioning details."""


class TrainingDivergedError(NumericalError):
    """Training hit a non-finite loss; the last good checkpoint is retained."""

    def __init__(self, message, record=None):
        super().__init__(message)
        self.record = record
