"""Exception types shared across the suite."""


class SpecValidationError(ValueError):
    """An experiment spec (CLI input) failed schema validation."""


class NumericalFailure(RuntimeError):
    """A run failed numerically (divergence, non-convergence, bad truncation)."""


class DivergenceError(NumericalFailure):
    """A trajectory left the trusted amplitude range."""


class ConvergenceError(NumericalFailure):
    """An iterative solve did not reach its tolerance within budget."""
