"""Exception hierarchy.

Every failure raised by the library derives from :class:`RevbendError` so the
CLI can map stages to exit codes without catching unrelated bugs.
"""


class RevbendError(Exception):
    """Base class for all library errors."""


# profile
class ImmersionFailure(RevbendError):
    pass


class RootClusterError(RevbendError):
    pass


class ParseError(RevbendError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


# perturb
class AdmissibilityViolation(RevbendError):
    pass


class NoMorseAngleFound(RevbendError):
    pass


class CapCollision(RevbendError):
    pass


class MonotonicityLoss(RevbendError):
    pass


class PocketOutOfBounds(RevbendError):
    pass


class ConvexityConstructionFailure(RevbendError):
    pass


# modesolve
class SolverError(RevbendError):
    """Base for numerical failures in the mode solver."""


class TruncationError(SolverError):
    pass


class PoleParameterError(SolverError):
    pass


class StiffnessError(SolverError):
    def __init__(self, message, z=None):
        self.z = z
        super().__init__(message)


class PositivityError(SolverError):
    pass


class NoCountJump(SolverError):
    def __init__(self, message, k_suggested=None):
        self.k_suggested = k_suggested
        super().__init__(message)


class BisectionStall(SolverError):
    pass


class ClosureFailure(SolverError):
    pass


# fieldcheck
class GridMismatch(RevbendError):
    pass


class DegenerateDefect(RevbendError):
    pass


# revcli
class ConfigError(RevbendError):
    pass


class MeshGridError(ConfigError, OSError):
    """Mesh or frame export asked for a grid that cannot be tessellated."""
