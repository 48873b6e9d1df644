class HamspaceError(Exception):
    """
    Base class for all errors raised by ``hamspace``.
    ``exit_code`` is the status the command-line tool exits with.
    """

    exit_code = 1


class UsageError(HamspaceError, ValueError):
    """
    Arguments are inconsistent with each other or with the data,
    e.g. mismatched code widths or a substring count that does not divide the width.
    """

    exit_code = 2


class FormatError(HamspaceError, ValueError):
    """
    A file or serialized object is malformed, truncated or missing.
    """

    exit_code = 3


class ContractViolation(HamspaceError):
    """
    A result failed verification against its oracle, or an operation would break
    an invariant of the artifacts on disk (e.g. overwriting without ``--force``).
    """

    exit_code = 4


class NumericError(HamspaceError, ArithmeticError):
    """
    Training produced a non-finite value.
    """

    exit_code = 5
