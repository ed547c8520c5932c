"""Exception types shared across the package."""


class HreserveError(Exception):
    """Base class for all errors raised by this package."""


class SchemaError(HreserveError):
    """A data file does not match its declared schema."""


class DataError(HreserveError):
    """Input rows violate a data invariant (duplicates, inconsistent flags, ...)."""


class ConfigError(HreserveError):
    """A configuration value is invalid or inconsistent."""


class FitError(HreserveError):
    """Model fitting failed: non-convergence, separation, or a degenerate response."""


class EstimabilityError(HreserveError):
    """A quantity cannot be estimated from the available data."""


class PredictionError(HreserveError):
    """A fitted model cannot score the supplied covariate rows."""


class SimulationError(HreserveError):
    """Simulation was requested from an invalid state."""


class StateError(HreserveError):
    """An object was used before reaching the required state (e.g. unfitted)."""


class EvaluationError(HreserveError):
    """A likelihood or error metric could not be evaluated."""
