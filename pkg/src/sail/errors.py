"""Exception types shared across the package."""


class ConfigError(Exception):
    """A configuration file or option is missing, malformed, or out of range."""


class InvalidGeometryError(Exception):
    """An airfoil genome produced unusable geometry (crossed or degenerate surfaces)."""


class ModelConditioningError(Exception):
    """Kernel matrix could not be factorized even after jitter escalation."""


class EvaluatorError(Exception):
    """The precise evaluator could not be invoked at all (as opposed to not converging)."""


class InitializationError(Exception):
    """No usable starting solutions could be produced."""
