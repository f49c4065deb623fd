"""Exception hierarchy; each class maps to a CLI exit code."""


class GMTError(Exception):
    exit_code = 3


class InvalidInput(GMTError, ValueError):
    exit_code = 3


class OutOfWindow(InvalidInput):
    pass


class HypothesisViolated(GMTError):
    """A precondition of the construction (corkscrew, two-ball, ...) fails."""

    exit_code = 1

    def __init__(self, message, stage=None, witness=None):
        super().__init__(message)
        self.stage = stage
        self.witness = witness


class ResolutionError(GMTError):
    """The discretization is too coarse to certify the requested property."""

    exit_code = 2

    def __init__(self, message, stage=None):
        super().__init__(message)
        self.stage = stage
