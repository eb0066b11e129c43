"""Exception hierarchy shared by the analytic, oracle and simulation layers."""


class AoIError(Exception):
    """Base class for all package errors."""


class ParameterError(AoIError, ValueError):
    """A parameter lies outside its admissible range."""


class DegenerateProcessError(AoIError, ValueError):
    """A delivery/detection process has zero mean, so AoI is unbounded."""


class DegenerateChainError(AoIError, ValueError):
    """A transmission chain is absorbing or periodic (|theta| = 1)."""


class ErgodicityError(AoIError, RuntimeError):
    """A Markov chain failed the ergodicity check."""


class AgeCapError(AoIError, RuntimeError):
    """Age truncation left too much probability mass in the tail."""
