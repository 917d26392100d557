"""Exception hierarchy; each class carries the CLI exit code it maps to."""


class QFourierError(Exception):
    exit_code = 1


class ArgumentError(QFourierError, ValueError):
    exit_code = 2


class PreconditionError(QFourierError, ValueError):
    exit_code = 2


class DomainError(QFourierError, ValueError):
    exit_code = 2


class SingularityError(QFourierError, ArithmeticError):
    exit_code = 2


class UnsupportedStateError(QFourierError, ValueError):
    exit_code = 2


class CapacityError(QFourierError):
    exit_code = 3


class StochasticFailure(QFourierError):
    exit_code = 4

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
