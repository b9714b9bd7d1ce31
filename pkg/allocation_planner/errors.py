"""Exception types raised across the planner package."""


class PlannerError(ValueError):
    """Base class for every error raised by allocation_planner."""


class NotSymmetric(PlannerError):
    """Matrix asymmetry exceeds the symmetry tolerance."""


class IndefiniteMatrix(PlannerError):
    """A matrix expected to be PSD has an eigenvalue below -tol_psd."""


class SingularMatrix(PlannerError):
    """Cholesky factorization failed even after diagonal jitter."""


class DimensionMismatch(PlannerError):
    """Array shapes do not agree with the model dimension."""


class EmptyBatch(PlannerError):
    """A batch without observation rows was passed to a fit."""


class InfeasibleConstraint(PlannerError):
    """Coverage or budget constraint cannot be satisfied."""


class DegeneratePosterior(PlannerError):
    """Posterior standard deviation is not strictly positive."""


class MalformedInstance(PlannerError):
    """Experiment source data is inconsistent or contains NaN."""


class MissingBaseline(PlannerError):
    """The baseline policy id is absent from the runs table."""


class ConfigError(PlannerError):
    """Invalid configuration value.

    Args:
        message: Human readable diagnostic
        field: Dotted name of the offending field, if known
        line: Line number in the config file, if known
    """

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        self.field = field
        self.line = line
        location = ""
        if field is not None:
            location += f" [field '{field}']"
        if line is not None:
            location += f" [line {line}]"
        super().__init__(f"{message}{location}")


class NonFiniteError(PlannerError):
    """Loss or gradient evaluated to NaN/inf.

    Args:
        message: Human readable diagnostic
        scenario: Index of the first offending scenario, if it could be located
    """

    def __init__(self, message: str, scenario: int | None = None):
        self.scenario = scenario
        suffix = f" (scenario {scenario})" if scenario is not None else ""
        super().__init__(f"{message}{suffix}")


class NonConvergenceWarning(RuntimeWarning):
    """Newton iterations hit the cap; the last iterate is returned."""
