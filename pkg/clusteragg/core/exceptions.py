"""
Custom exception classes for the robust aggregation lab.
"""
from typing import Any, Dict, Optional

EXIT_RUNTIME_FAILURE = 1
EXIT_USAGE_ERROR = 2


class BaseLabError(Exception):
    """Base exception class for all lab errors."""

    def __init__(
        self,
        message: str,
        exit_code: int = EXIT_RUNTIME_FAILURE,
        error_code: str = "INTERNAL_ERROR",
        details: Optional[Dict[str, Any]] = None
    ):
        self.message = message
        self.exit_code = exit_code
        self.error_code = error_code
        self.details = details or {}
        super().__init__(self.message)


class ValidationError(BaseLabError):
    """Exception for malformed domain input."""

    def __init__(
        self,
        message: str = "Validation error",
        field: Optional[str] = None,
        details: Optional[Dict[str, Any]] = None
    ):
        super().__init__(
            message=message,
            exit_code=EXIT_USAGE_ERROR,
            error_code="VALIDATION_ERROR",
            details=details or {}
        )
        if field:
            self.details["field"] = field


class EmptySetError(ValidationError):
    """Exception for geometry operations given no points."""

    def __init__(self, operation: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(
            message=f"{operation} requires a nonempty point set",
            details=details or {}
        )
        self.details["operation"] = operation
        self.error_code = "EMPTY_SET"


class DimensionMismatchError(ValidationError):
    """Exception for vectors of inconsistent dimension."""

    def __init__(
        self,
        expected: int,
        actual: int,
        details: Optional[Dict[str, Any]] = None
    ):
        super().__init__(
            message=f"Dimension mismatch: expected {expected}, got {actual}",
            details=details or {}
        )
        self.details["expected"] = expected
        self.details["actual"] = actual
        self.error_code = "DIMENSION_MISMATCH"


class PreconditionError(ValidationError):
    """Exception for violated operation preconditions (e.g. f >= n/2)."""

    def __init__(
        self,
        message: str = "Precondition violated",
        rule_name: Optional[str] = None,
        details: Optional[Dict[str, Any]] = None
    ):
        super().__init__(message=message, details=details or {})
        if rule_name:
            self.details["rule_name"] = rule_name
        self.error_code = "PRECONDITION_VIOLATED"


class EnumerationCapError(PreconditionError):
    """Exception raised when an exhaustive oracle would exceed its size cap."""

    def __init__(self, n: int, cap: int, details: Optional[Dict[str, Any]] = None):
        super().__init__(
            message=f"Exhaustive enumeration refused: n={n} exceeds cap {cap}",
            details=details or {}
        )
        self.details["n"] = n
        self.details["cap"] = cap
        self.error_code = "ENUMERATION_CAP_EXCEEDED"


class UnsupportedRuleError(ValidationError):
    """Exception for rules that do not support a requested operation."""

    def __init__(
        self,
        rule: str,
        operation: Optional[str] = None,
        details: Optional[Dict[str, Any]] = None
    ):
        message = f"Rule '{rule}' is not supported"
        if operation:
            message += f" for {operation}"
        super().__init__(message=message, field="rule", details=details or {})
        self.details["rule"] = rule
        self.error_code = "UNSUPPORTED_RULE"


class ConfigurationError(BaseLabError):
    """Exception for configuration file and schema errors."""

    def __init__(
        self,
        message: str = "Configuration error",
        config_key: Optional[str] = None,
        details: Optional[Dict[str, Any]] = None
    ):
        super().__init__(
            message=message,
            exit_code=EXIT_USAGE_ERROR,
            error_code="CONFIGURATION_ERROR",
            details=details or {}
        )
        if config_key:
            self.details["config_key"] = config_key


class AttackConfigurationError(ConfigurationError):
    """Exception for invalid attack parameters."""

    def __init__(
        self,
        message: str = "Invalid attack configuration",
        attack_kind: Optional[str] = None,
        details: Optional[Dict[str, Any]] = None
    ):
        super().__init__(message=message, details=details or {})
        if attack_kind:
            self.details["attack_kind"] = attack_kind
        self.error_code = "ATTACK_CONFIGURATION_ERROR"


class SimulationError(BaseLabError):
    """Exception for training runs that reach an invalid state."""

    def __init__(
        self,
        message: str = "Simulation failed",
        round_index: Optional[int] = None,
        details: Optional[Dict[str, Any]] = None
    ):
        super().__init__(
            message=message,
            exit_code=EXIT_RUNTIME_FAILURE,
            error_code="SIMULATION_ERROR",
            details=details or {}
        )
        if round_index is not None:
            self.details["round"] = round_index


class ResultStoreError(BaseLabError):
    """Exception for unreadable or corrupt persisted results."""

    def __init__(
        self,
        message: str = "Result store error",
        path: Optional[str] = None,
        details: Optional[Dict[str, Any]] = None
    ):
        super().__init__(
            message=message,
            exit_code=EXIT_RUNTIME_FAILURE,
            error_code="RESULT_STORE_ERROR",
            details=details or {}
        )
        if path:
            self.details["path"] = path
