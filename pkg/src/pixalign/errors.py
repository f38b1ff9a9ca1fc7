"""Exception hierarchy. CLI exit codes key off the two base classes."""


class PixalignError(Exception):
    pass


class InputError(PixalignError, ValueError):
    """Malformed input, bad parameters or unreadable files (exit code 2)."""


class FormatError(InputError):
    pass


class NumericError(PixalignError, ArithmeticError):
    """Numerically degenerate situation (exit code 3)."""


class BehindCameraError(NumericError):
    pass


class InsufficientSupportError(NumericError):
    pass


class DegenerateAlignmentError(NumericError):
    pass
