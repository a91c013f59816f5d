"""
Custom exceptions for the evoctl evolution engine

This module defines a hierarchy of custom exceptions used throughout the
application. Candidate failures (wrong answers, timeouts, ...) are data carried
in EvalOutcome, not exceptions; the classes below describe engine, environment
and contract failures.
"""
from typing import Any, Dict, Optional


class EvoctlError(Exception):
    """
    Base exception class for all evoctl errors.

    Attributes:
        message (str): Error message
        code (int): Process exit code used when the error escapes a CLI command
        details (dict): Additional details about the error
    """

    def __init__(
        self,
        message: str,
        code: int = 1,
        details: Optional[Dict[str, Any]] = None,
    ) -> None:
        """
        Initialize a new EvoctlError.

        Args:
            message (str): Error description
            code (int): Exit code (default: 1)
            details (Optional[Dict]): Additional error details
        """
        super().__init__(message)
        self.message = message
        self.code = code
        self.details = details or {}

    def to_dict(self) -> Dict[str, Any]:
        """
        Convert the exception to a dictionary for JSON serialization.

        Returns:
            dict: Dictionary representation of the error
        """
        result = {
            "error": self.message,
            "type": type(self).__name__,
            "code": self.code,
        }

        if self.details:
            result["details"] = self.details

        return result


class ConfigError(EvoctlError):
    """
    Exception raised for configuration errors.
    """

    def __init__(
        self,
        message: str = "Configuration error",
        code: int = 1,
        details: Optional[Dict[str, Any]] = None,
    ) -> None:
        super().__init__(message, code, details)


class ValidationError(EvoctlError):
    """
    Exception raised when a task bundle or data record violates its invariants.
    """

    def __init__(
        self,
        message: str = "Validation error",
        code: int = 1,
        details: Optional[Dict[str, Any]] = None,
    ) -> None:
        super().__init__(message, code, details)


class NotFoundError(EvoctlError):
    """
    Exception raised when a file, task or run artifact is not found.
    """

    def __init__(
        self,
        message: str = "Resource not found",
        code: int = 1,
        details: Optional[Dict[str, Any]] = None,
    ) -> None:
        super().__init__(message, code, details)


class SandboxUnavailable(EvoctlError):
    """
    Exception raised when the OS facilities the sandbox needs are missing
    (POSIX resource limits, process inspection, a language toolchain).

    Distinct from a candidate failure: the engine cannot score anything.
    """

    def __init__(
        self,
        message: str = "Sandbox unavailable",
        code: int = 1,
        details: Optional[Dict[str, Any]] = None,
    ) -> None:
        super().__init__(message, code, details)


class EmptyTrace(EvoctlError):
    """Raised when a memory trace without samples is integrated."""

    def __init__(self, message: str = "Memory trace has no samples") -> None:
        super().__init__(message)


class EmptyInput(EvoctlError):
    """Raised when an aggregate is requested over no rows."""

    def __init__(self, message: str = "Cannot aggregate an empty row set") -> None:
        super().__init__(message)


class ZeroMeasurement(EvoctlError):
    """Raised when a passed candidate reports a zero time, peak or integral."""

    def __init__(
        self,
        message: str = "Candidate measurement is zero",
        details: Optional[Dict[str, Any]] = None,
    ) -> None:
        super().__init__(message, 1, details)


class NoEvaluatedCandidate(EvoctlError):
    """Raised when no population member has passed evaluation."""

    def __init__(
        self,
        message: str = "No evaluated candidate in population",
        details: Optional[Dict[str, Any]] = None,
    ) -> None:
        super().__init__(message, 1, details)


class NoViableParent(EvoctlError):
    """Raised when every population member has zero reward."""

    def __init__(
        self,
        message: str = "No population member has positive reward",
        details: Optional[Dict[str, Any]] = None,
    ) -> None:
        super().__init__(message, 1, details)


class GenerationExhausted(EvoctlError):
    """
    Exception raised when the generator keeps producing unparseable output
    after the configured number of retries.
    """

    def __init__(
        self,
        message: str = "Generator output unparseable after retries",
        details: Optional[Dict[str, Any]] = None,
    ) -> None:
        super().__init__(message, 1, details)


class ParseError(EvoctlError):
    """
    Exception raised when a generator response does not match its schema.

    Attributes:
        reason (str): Short machine-readable cause, e.g. "wrong_count",
            "malformed_json", "empty_entry", "no_code_block"
    """

    def __init__(
        self,
        reason: str,
        message: Optional[str] = None,
        details: Optional[Dict[str, Any]] = None,
    ) -> None:
        super().__init__(message or f"Unparseable response: {reason}", 1, details)
        self.reason = reason


class MissingPlaceholder(EvoctlError):
    """Raised when a prompt template is rendered without one of its keys."""

    def __init__(self, template: str, key: str) -> None:
        super().__init__(
            f"Template '{template}' requires placeholder '{key}'",
            1,
            {"template": template, "key": key},
        )
        self.key = key


class TransportError(EvoctlError):
    """
    Exception raised when the chat-completion endpoint cannot be reached or
    keeps failing after retries.
    """

    def __init__(
        self,
        message: str = "LLM transport error",
        code: int = 1,
        details: Optional[Dict[str, Any]] = None,
    ) -> None:
        super().__init__(message, code, details)


class RateLimited(TransportError):
    """Raised when the endpoint keeps answering HTTP 429 after retries."""

    def __init__(
        self,
        message: str = "LLM endpoint rate limited the request",
        details: Optional[Dict[str, Any]] = None,
    ) -> None:
        super().__init__(message, 1, details)


class EmbedderUnavailable(EvoctlError):
    """Raised when the embedding endpoint cannot produce vectors."""

    def __init__(
        self,
        message: str = "Embedding service unavailable",
        details: Optional[Dict[str, Any]] = None,
    ) -> None:
        super().__init__(message, 1, details)


class MissingReference(EvoctlError):
    """Raised when a task has no human reference statistics to score against."""

    def __init__(self, task_id: str) -> None:
        super().__init__(
            f"Task '{task_id}' has no reference statistics",
            1,
            {"task_id": task_id},
        )
        self.task_id = task_id


class StoreCorruptedError(EvoctlError):
    """Raised when the global store's entry file and vector sidecar disagree."""

    def __init__(
        self,
        message: str = "Global store is corrupted",
        details: Optional[Dict[str, Any]] = None,
    ) -> None:
        super().__init__(message, 1, details)
