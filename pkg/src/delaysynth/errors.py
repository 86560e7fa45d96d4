"""Exception types raised across the package."""


class DelaySynthError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(DelaySynthError, ValueError):
    pass


class ShapeMismatch(DelaySynthError, ValueError):
    pass


class DecompositionError(DelaySynthError):
    """Block-diagonalizing transform is too ill-conditioned to be trusted."""

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class SolverFailure(DelaySynthError):
    """Numerical breakdown of the SDP backend (not an infeasibility verdict)."""


class NotStableAtZero(DelaySynthError):
    pass


class UnstableAtZero(NotStableAtZero):
    pass


class NotStabilizable(DelaySynthError):
    pass


class InfeasibleAtH(DelaySynthError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []


class NoProgress(DelaySynthError):
    pass


class SimulationDiverged(DelaySynthError):
    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


class ConfigError(DelaySynthError):
    """Invalid problem configuration; ``field`` names the offending key."""

    def __init__(self, message, field=None, line=None):
        where = []
        if field is not None:
            where.append(f"field '{field}'")
        if line is not None:
            where.append(f"line {line}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
        self.field = field
        self.line = line
