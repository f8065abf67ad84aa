"""Exception types shared across the solver."""


class MeshlessEmError(Exception):
    """Base class for solver errors."""


class ConfigError(MeshlessEmError):
    """Scenario file is syntactically or semantically invalid."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class IsolatedNodeError(MeshlessEmError):
    """A node has no neighbor of the required role inside its support."""


class SingularCorrectionError(MeshlessEmError):
    """Moment matrix of a consistency correction is numerically singular."""


class SolverError(MeshlessEmError):
    """A linear solve failed (singular matrix or non-convergence)."""


class DivergenceError(MeshlessEmError):
    """Field values blew up during time stepping."""

    def __init__(self, step, detail=""):
        msg = f"field divergence detected at step {step}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
        self.step = step
