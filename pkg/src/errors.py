"""
errors.py

Domain exceptions shared by the analysis, simulation and MDP modules.
"""


class InstabilityError(ValueError):
    """
    Raised when a configuration is outside the stability region of a policy.

    The stability margin (for example ``s(k) - k*rho`` or ``1 - rho_k``) is
    kept on the exception so sweep tooling can annotate the asymptotes.
    """

    def __init__(self, message: str, margin: float):
        super().__init__(f"{message} (stability margin {margin:.6g})")
        self.margin = margin


class DivergenceError(RuntimeError):
    """Raised when value iteration does not converge within its budget."""

    def __init__(self, message: str, span_trace: list):
        super().__init__(message)
        self.span_trace = list(span_trace)


class ConfigError(ValueError):
    """Raised for invalid configuration values; ``key`` names the offender."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key
