"""Custom exceptions for qbsense."""


class QbsenseError(Exception):
    """Base exception for all qbsense errors."""


class ConfigError(QbsenseError):
    """Exception for configuration errors."""


class DomainError(QbsenseError):
    """Raised when a parameter violates an operation's precondition."""


class BasisError(QbsenseError):
    """Raised for occupations outside a basis or mismatched bases."""


class OperatorError(QbsenseError):
    """Raised when an operator lacks a required property (e.g. Hermiticity)."""


class OutputError(QbsenseError):
    """Exception for result-file emission errors."""


class NumericalContractError(QbsenseError):
    """Raised when a numerical guarantee cannot be certified."""


class TruncationError(NumericalContractError):
    """Raised when a Fock-space truncation discards too much probability."""


def exit_code_for(error: QbsenseError) -> int:
    """CLI exit code: 2 for numerical-contract violations, 1 otherwise."""
    return 2 if isinstance(error, NumericalContractError) else 1
