"""Exception hierarchy shared across the package."""


class RSRMError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInput(RSRMError, ValueError):
    """Malformed numeric input (wrong shape, non-finite entries)."""


class RankDeficient(InvalidInput):
    pass


class NotPositiveDefinite(InvalidInput):
    pass


class BaseMismatch(InvalidInput):
    """A tangent vector does not live at the point it is used with."""


class RetractFailed(RSRMError, ArithmeticError):
    """A retraction left the manifold numerically (SPD only)."""


class InvalidConfig(RSRMError, ValueError):
    pass


class RunAborted(RSRMError, RuntimeError):
    """An optimization run could not continue."""


class ConfigError(InvalidConfig):
    """Experiment configuration file is invalid.

    ``problems`` holds one ``(line, message)`` pair per violation; ``line``
    is ``None`` when the violation is not tied to a particular line.
    """

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [(None, problems)]
        self.problems = list(problems)
        msg = "; ".join(
            f"line {ln}: {m}" if ln is not None else m for ln, m in self.problems
        )
        super().__init__(msg)


class IngestError(RSRMError, ValueError):
    def __init__(self, message, index=None):
        self.index = index
        if index is not None:
            message = f"sample {index}: {message}"
        super().__init__(message)


class PlotError(RSRMError, ValueError):
    pass
