"""Exception hierarchy.

The CLI maps ``ConfigError`` to exit status 2 and every other
``HomoenergeticError`` to exit status 3.
"""


class HomoenergeticError(Exception):
    pass


class ConfigError(HomoenergeticError, ValueError):
    """Invalid configuration; ``key`` names the offending entry."""

    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")


class NumericalError(HomoenergeticError, ArithmeticError):
    pass


class QuadratureError(NumericalError):
    def __init__(self, message, achieved=None):
        self.achieved = achieved
        super().__init__(message)


class BlowUpError(NumericalError):
    """det(I + tA) vanishes at ``critical_time``."""

    def __init__(self, critical_time):
        self.critical_time = float(critical_time)
        super().__init__(f"flow blows up: det(I + tA) = 0 at t = {self.critical_time!r}")


class DegenerateFlowError(HomoenergeticError, ValueError):
    pass


class IntegrationError(NumericalError):
    pass


class NonRealLeadingEigenvalue(NumericalError):
    def __init__(self, eigenvalue):
        self.eigenvalue = complex(eigenvalue)
        super().__init__(f"leading eigenvalue is not real: {self.eigenvalue!r}")


class SimulationError(NumericalError):
    pass


class DegenerateEnsembleError(NumericalError):
    pass


class NotConverged(NumericalError):
    def __init__(self, message, diagnostics=None):
        self.diagnostics = diagnostics or {}
        super().__init__(message)
