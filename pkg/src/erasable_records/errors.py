"""Exception hierarchy.

Every class carries an ``exit_code`` used by the command line front end.
"""


class ErasableRecordsError(Exception):
    exit_code = 1


class ConfigInvalid(ErasableRecordsError, ValueError):
    exit_code = 1


class NonPositiveParameter(ErasableRecordsError, ValueError):
    exit_code = 1


class DimensionMismatch(ErasableRecordsError, ValueError):
    exit_code = 3


class NonConvergence(ErasableRecordsError, RuntimeError):
    exit_code = 3

    def __init__(self, message, residual=None, trace=None):
        super().__init__(message)
        self.residual = residual
        self.trace = list(trace) if trace is not None else []


class NotSubmodular(ErasableRecordsError, ValueError):
    exit_code = 5


class VerificationFailure(ErasableRecordsError, AssertionError):
    exit_code = 5

    def __init__(self, message, violations=None):
        super().__init__(message)
        self.violations = dict(violations or {})


class NoDominantAction(ErasableRecordsError, ValueError):
    exit_code = 7


class SupportShifts(ErasableRecordsError, ValueError):
    exit_code = 7


class NotCertified(ErasableRecordsError, ValueError):
    exit_code = 7


class StateSpaceMismatch(ErasableRecordsError, ValueError):
    exit_code = 8
