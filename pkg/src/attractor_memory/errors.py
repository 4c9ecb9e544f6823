"""Exception types shared across the package.

The CLI maps these onto exit codes: FormatError and DimensionError are data
problems (exit 3), NumericalError and subclasses are numerical failures
(exit 4). Argument mistakes surface as argparse usage errors (exit 2).
"""


class DimensionError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class DomainError(ValueError):
    """A value lies outside an operation's domain (log of a non-positive
    number, non-finite input, asymmetric matrix where symmetry is required)."""


class NumericalError(ArithmeticError):
    """A computation produced an unusable result (non-finite objective,
    non-positive innovation variance)."""


class NotPositiveDefinite(NumericalError):
    """Cholesky factorization failed.

    minor_index is the 1-based order of the leading minor that is not
    positive definite, as reported by the factorization.
    """

    def __init__(self, minor_index: int, context: str = ""):
        self.minor_index = int(minor_index)
        msg = f"matrix not positive definite: leading minor {self.minor_index}"
        if context:
            msg = f"{context}: {msg}"
        super().__init__(msg)


class FormatError(ValueError):
    """A file does not conform to the corpus or model container format."""
