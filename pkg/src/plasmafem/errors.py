"""Exception hierarchy shared by all modules."""


class PlasmaFemError(Exception):
    """Base class for all errors raised by plasmafem."""


class InvalidParameterError(PlasmaFemError, ValueError):
    pass


class NotAPlasmaError(InvalidParameterError):
    """Raised when the plasma parameter Lambda is <= 1."""


class SingularResonanceError(PlasmaFemError, ArithmeticError):
    """Raised when alpha^2 equals a cyclotron frequency squared (lossless resonance)."""


class DegenerateFieldError(InvalidParameterError):
    """Raised when |B0| vanishes at an evaluation point."""


class AbsorptionMissingError(PlasmaFemError):
    """Raised when the medium has no absorption (zeta <= 0): the model is ill-posed."""

    def __init__(self, zeta, message=None):
        self.zeta = zeta
        super().__init__(message or (
            f"absorption missing: zeta = {zeta:.3e} <= 0; the time-harmonic "
            "problem is ill-posed without collisions or Landau damping"))


class MeshParseError(PlasmaFemError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MeshStructureError(PlasmaFemError, ValueError):
    pass


class UnsupportedGeometryError(PlasmaFemError, ValueError):
    pass


class SolverError(PlasmaFemError, RuntimeError):
    pass


class ConvergenceError(SolverError):
    """GMRES did not reach the tolerance; carries the best iterate and history."""

    def __init__(self, message, best=None, history=None):
        super().__init__(message)
        self.best = best
        self.history = history if history is not None else []


class SizeGuardError(PlasmaFemError, MemoryError):
    pass


class ConfigError(PlasmaFemError, ValueError):
    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)
