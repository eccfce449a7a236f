"""Exception types raised by the solver stack."""


class InvalidArgumentError(ValueError):
    """Bad dimensions, bad parameters or malformed input."""


class InvalidStateError(RuntimeError):
    """An object is in a state that cannot be evaluated (e.g. sigma <= 0)."""


class NumericalDivergenceError(ArithmeticError):
    """A non-finite value appeared during a sweep or an iteration."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class SolverFailure(RuntimeError):
    """The inner solver could not produce a step."""
