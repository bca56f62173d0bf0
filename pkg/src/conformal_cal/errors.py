"""Exception types shared across the toolkit."""


class ContractViolation(ValueError):
    """An input broke a documented precondition (dimension, range, finiteness)."""


class InsufficientDataError(ValueError):
    """Not enough data to produce the requested statistic."""


class ConfigError(ValueError):
    """Experiment configuration failed validation.

    ``violations`` holds every problem found, not just the first.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class LossSourceError(RuntimeError):
    """A loss source failed mid-run; ``partial`` carries the outcome so far."""

    def __init__(self, message, partial):
        super().__init__(message)
        self.partial = partial
