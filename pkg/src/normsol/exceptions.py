class NormsolError(Exception):
    """Base class for all errors raised by normsol."""


class GridError(NormsolError, ValueError):
    pass


class HypothesisError(NormsolError, ValueError):
    """Parameters outside the admissible exponent/coefficient range."""


class ShootingError(NormsolError, RuntimeError):
    pass


class ConvergenceError(NormsolError, RuntimeError):
    """Newton iteration failed; ``reason`` is a short machine-readable tag."""

    def __init__(self, message: str, reason: str = "max-iterations", history=None):
        super().__init__(message)
        self.reason = reason
        self.history = list(history or [])


class TruncationError(NormsolError, ValueError):
    """Rescaled field does not decay inside the target grid."""


class ChartError(NormsolError, ValueError):
    pass


class DegenerateError(NormsolError, RuntimeError):
    pass


class ContinuationStall(NormsolError, RuntimeError):
    """Step size fell below the minimum; carries the partial trace."""

    def __init__(self, message: str, trace=None, state=None):
        super().__init__(message)
        self.trace = trace
        self.state = state


class FormatError(NormsolError, ValueError):
    pass


class ConfigError(NormsolError, ValueError):
    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))
