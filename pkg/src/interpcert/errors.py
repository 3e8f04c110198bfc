"""Exception hierarchy. Every error raised by the package derives from
:class:`CertificationError`."""


class CertificationError(Exception):
    pass


class ZeroBaselineError(CertificationError, ZeroDivisionError):
    """The baseline error is zero, so no ratio exists."""


class LossMismatchError(CertificationError, ValueError):
    pass


class ContextMismatchError(CertificationError, ValueError):
    """Certificates measured under different loss or robustness settings."""


class EmptyInputError(CertificationError, ValueError):
    pass


class RankDeficientError(CertificationError, ArithmeticError):
    pass


class DimensionMismatchError(CertificationError, ValueError):
    pass


class InvalidTargetError(CertificationError, ValueError):
    pass


class RepresentationError(CertificationError, TypeError):
    """Information outside what the target model's hypothesis class can absorb."""


class EmptyPrototypeError(CertificationError, ValueError):
    pass


class EmptyTrainingError(CertificationError, ValueError):
    pass


class SingleClassError(CertificationError, ValueError):
    pass


class InvalidCountError(CertificationError, ValueError):
    pass


class InsufficientClassError(CertificationError, ValueError):
    pass


class InvalidEpsilonError(CertificationError, ValueError):
    pass


class EmptyPartError(CertificationError, ValueError):
    pass


class MissingColumnError(CertificationError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class ParseError(CertificationError, ValueError):
    def __init__(self, line, column, message):
        self.line = line
        self.column = column
        super().__init__(f"line {line}, column {column!r}: {message}")


class MagicMismatchError(CertificationError, ValueError):
    pass


class CountMismatchError(CertificationError, ValueError):
    pass


class TruncatedFileError(CertificationError, ValueError):
    pass


class SpecValidationError(CertificationError, ValueError):
    """Run spec problems; ``problems`` holds ``(field_path, message)`` pairs."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(f"{path}: {msg}" for path, msg in self.problems))
