class HamlawError(Exception):
    """Root of every error raised by hamlaw"""


class InvalidArgumentError(HamlawError, ValueError):
    """Malformed input: bad arity, out-of-range vertex, non-bijection, s not dividing n"""


class ResourceLimitError(HamlawError):
    """A configured cap was exceeded; no partial or approximate answer is returned"""


class InfeasibleConfigurationError(HamlawError, ValueError):
    """The requested configuration cannot be realised (overlap, density above 1)"""


class InternalConsistencyError(HamlawError, AssertionError):
    """An exactness guard tripped, e.g. an ordered count not divisible by its symmetry"""


class NumericalFailureError(HamlawError, ArithmeticError):
    """Quadrature or another numerical routine did not converge"""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
