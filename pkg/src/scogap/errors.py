class InfeasibleParametersError(ValueError):
    """Raised when no instance satisfies the requested constraint set.

    ``violated`` lists the inequalities that failed, in human-readable form.
    """

    def __init__(self, message: str, violated: list[str] | None = None):
        self.violated = list(violated or [])
        if self.violated:
            message = f"{message}: " + "; ".join(self.violated)
        super().__init__(message)


class LemmaPreconditionError(InfeasibleParametersError):
    """A closed-form trajectory was requested outside the regime it covers."""


class ProjectionFiredError(RuntimeError):
    """The projection-free surrogate was projected after the midpoint."""


class ConfigError(ValueError):
    """An experiment configuration is malformed or self-contradictory."""
