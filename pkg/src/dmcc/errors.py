class DmccError(Exception):
    pass


class SingularAttitude(DmccError, ValueError):
    """Pitch too close to +-pi/2 for the Euler-rate map."""


class NotNormalized(DmccError, ValueError):
    pass


class NoConvergence(DmccError, RuntimeError):
    def __init__(self, iterations: int, residual: float, index: int | None = None):
        self.iterations = iterations
        self.residual = residual
        self.index = index
        where = "" if index is None else f" at step {index}"
        super().__init__(f"Newton solve failed{where}: {iterations} iterations, residual {residual:.3e}")


class ValidationError(DmccError, ValueError):
    """Invalid spec or scenario; ``errors`` maps field paths to messages."""

    def __init__(self, errors: dict[str, str]):
        self.errors = dict(errors)
        msg = "; ".join(f"{k}: {v}" for k, v in self.errors.items())
        super().__init__(msg)


class UnknownPreset(DmccError, KeyError):
    pass


class NotTrained(DmccError, RuntimeError):
    pass


class SolverFailure(DmccError, RuntimeError):
    def __init__(self, report, message: str | None = None):
        self.report = report
        super().__init__(message or f"solver finished with status {report.status}")
