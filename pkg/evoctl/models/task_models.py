"""
Task Models for the evoctl evolution engine

This module defines the problem-side data model: task specifications, their
judge fixtures and the human reference statistics used for scoring.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional

from ..util.exceptions import ValidationError

DEFAULT_TIME_LIMIT = 10.0
DEFAULT_MEMORY_LIMIT = 1024 * 1024 * 1024


class Language(str, Enum):
    PYTHON = "python"
    CPP = "cpp"

    @property
    def extension(self) -> str:
        return "py" if self is Language.PYTHON else "cpp"


class Comparison(str, Enum):
    EXACT = "exact"
    TOKEN_WISE = "token_wise"


@dataclass(frozen=True)
class TestCase:
    """
    One judge fixture: stdin bytes and the expected stdout bytes.
    """

    __test__ = False  # not a pytest class

    input: bytes
    expected_output: bytes
    comparison: Comparison = Comparison.TOKEN_WISE

    def matches(self, actual: bytes) -> bool:
        """
        Compare program output with the expected output.

        Args:
            actual (bytes): Captured stdout of the candidate

        Returns:
            bool: True if the output is accepted
        """
        if self.comparison is Comparison.EXACT:
            return actual == self.expected_output
        return actual.split() == self.expected_output.split()


@dataclass(frozen=True)
class ReferenceStats:
    """
    Human-solution measurements (time in seconds, peak in bytes, integral in
    MB·s) that candidates are scored against.
    """

    exec_time: float
    peak_memory: float
    integral: float

    def __post_init__(self) -> None:
        if min(self.exec_time, self.peak_memory, self.integral) <= 0:
            raise ValidationError(
                "Reference statistics must all be positive",
                details={
                    "exec_time": self.exec_time,
                    "peak_memory": self.peak_memory,
                    "integral": self.integral,
                },
            )

    def to_dict(self) -> Dict[str, float]:
        return {
            "exec_time": self.exec_time,
            "peak_memory": self.peak_memory,
            "integral": self.integral,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ReferenceStats":
        try:
            return cls(
                exec_time=float(data["exec_time"]),
                peak_memory=float(data["peak_memory"]),
                integral=float(data["integral"]),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ValidationError(f"Malformed reference statistics: {e}") from e


@dataclass
class TaskSpec:
    """
    Model for one optimization task: the problem statement, its fixtures,
    limits and optional human reference.
    """

    task_id: str
    statement: str
    language: Language
    tests: List[TestCase]
    time_limit: float = DEFAULT_TIME_LIMIT
    memory_limit: int = DEFAULT_MEMORY_LIMIT
    reference: Optional[ReferenceStats] = None
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.tests:
            raise ValidationError(
                f"Task '{self.task_id}' has no tests",
                details={"task_id": self.task_id},
            )
        if self.time_limit <= 0:
            raise ValidationError(
                f"Task '{self.task_id}' time_limit must be positive",
                details={"task_id": self.task_id},
            )
        if self.memory_limit <= 0:
            raise ValidationError(
                f"Task '{self.task_id}' memory_limit must be positive",
                details={"task_id": self.task_id},
            )

    def header_dict(self) -> Dict[str, Any]:
        """Return the ``task.json`` payload (everything except fixtures)."""
        payload: Dict[str, Any] = {
            "task_id": self.task_id,
            "statement": self.statement,
            "language": self.language.value,
            "time_limit": self.time_limit,
            "memory_limit": self.memory_limit,
            "comparisons": [test.comparison.value for test in self.tests],
        }
        if self.reference is not None:
            payload["reference"] = self.reference.to_dict()
        if self.metadata:
            payload["metadata"] = self.metadata
        return payload
