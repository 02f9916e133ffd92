"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class CutoffLabError(Exception):
    exit_code = 1


class InvalidArgument(CutoffLabError, ValueError):
    pass


class InvalidModulus(InvalidArgument):
    pass


class InvalidTime(InvalidArgument):
    pass


class InvalidRegime(InvalidArgument):
    pass


class UnsupportedClosedForm(InvalidArgument):
    pass


class SingularCorrelation(CutoffLabError, ArithmeticError):
    pass


class NotPositiveDefinite(CutoffLabError, ArithmeticError):
    pass


class TooLarge(CutoffLabError):
    """Instance exceeds an enumeration or dense-storage budget."""

    exit_code = 2


class InvariantFailure(CutoffLabError, AssertionError):
    exit_code = 3
