"""Exception types shared across the package."""


class InvalidArgumentError(ValueError):
    """An argument violates an operation's precondition."""


class ConfigurationError(ValueError):
    """A configuration is inconsistent or describes an empty/degenerate setup."""


class SamplerDivergenceError(RuntimeError):
    """A Langevin chain left the finite region.

    ``chain`` and ``step`` locate the first offending state; ``partial`` may
    carry an outer trajectory recorded before the failure.
    """

    def __init__(self, message, chain=None, step=None, partial=None):
        super().__init__(message)
        self.chain = chain
        self.step = step
        self.partial = partial


class EstimatorError(RuntimeError):
    """The zeroth-order estimator produced a nonfinite value."""

    def __init__(self, message, iteration=None, partial=None):
        super().__init__(message)
        self.iteration = iteration
        self.partial = partial
