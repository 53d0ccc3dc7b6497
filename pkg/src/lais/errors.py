"""Exception types shared across the package."""


class LaisError(Exception):
    """Base class for package errors."""


class ConfigError(LaisError):
    """Malformed or inconsistent experiment configuration."""


class ChainInitError(LaisError):
    """A chain could not obtain a valid initial state."""

    def __init__(self, message, chain_index=None):
        super().__init__(message)
        self.chain_index = chain_index


class GradientError(LaisError):
    """Gradient requested at a point where the target is not differentiable."""


class NumericalError(LaisError):
    """A computation produced NaN or otherwise invalid numbers."""


class BudgetMismatchError(LaisError):
    """Observed evaluation counts disagree with the configured budget."""

    def __init__(self, message, expected=None, observed=None):
        super().__init__(message)
        self.expected = expected
        self.observed = observed


class DegenerateWeightsError(LaisError):
    """Weight set carries no usable mass.

    Carries diagnostics: the largest log-weight seen and how many samples
    had log-weight of negative infinity.
    """

    def __init__(self, message, max_log_weight=None, n_zero_weight=None):
        super().__init__(message)
        self.max_log_weight = max_log_weight
        self.n_zero_weight = n_zero_weight
