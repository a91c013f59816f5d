"""
Evaluation Models for the evoctl evolution engine

Measurement results produced by the sandbox evaluator.
Units: seconds for time, bytes for memory, MB·s (MiB-seconds) for integrals.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple


class EvalStatus(str, Enum):
    PASSED = "passed"
    WRONG_ANSWER = "wrong_answer"
    RUNTIME_ERROR = "runtime_error"
    TIMEOUT = "timeout"
    MEMORY_EXCEEDED = "memory_exceeded"
    COMPILE_ERROR = "compile_error"


@dataclass
class MemoryTrace:
    """Resident-memory samples of one execution, timestamps relative to spawn."""

    samples: List[Tuple[float, int]] = field(default_factory=list)
    sample_period: float = 0.001

    def add(self, timestamp: float, resident_memory: int) -> None:
        # Keep timestamps strictly increasing even on coarse clocks
        if self.samples and timestamp <= self.samples[-1][0]:
            return
        self.samples.append((max(timestamp, 0.0), resident_memory))

    @property
    def peak(self) -> int:
        return max((rss for _, rss in self.samples), default=0)


@dataclass
class TestResult:
    """Outcome of a candidate on a single fixture."""

    __test__ = False

    test_index: int
    status: EvalStatus
    time: float = 0.0
    peak: int = 0
    integral: float = 0.0
    detail: str = ""

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            "test_index": self.test_index,
            "status": self.status.value,
            "time": self.time,
            "peak": self.peak,
            "integral": self.integral,
        }
        if self.detail:
            data["detail"] = self.detail
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TestResult":
        return cls(
            test_index=int(data["test_index"]),
            status=EvalStatus(data["status"]),
            time=float(data.get("time", 0.0)),
            peak=int(data.get("peak", 0)),
            integral=float(data.get("integral", 0.0)),
            detail=data.get("detail", ""),
        )


@dataclass
class EvalOutcome:
    """
    Per-candidate measurement.

    exec_time is summed across tests, peak_memory is the maximum across tests
    and integral is summed across tests. For failed outcomes integral is None.
    """

    status: EvalStatus
    exec_time: float = 0.0
    peak_memory: int = 0
    integral: Optional[float] = None
    per_test: List[TestResult] = field(default_factory=list)
    runs_used: int = 1
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.status is EvalStatus.PASSED

    @classmethod
    def failure(cls, status: EvalStatus, detail: str = "", **kwargs: Any) -> "EvalOutcome":
        return cls(status=status, integral=None, detail=detail, **kwargs)

    @classmethod
    def from_tests(cls, per_test: List[TestResult]) -> "EvalOutcome":
        """
        Aggregate per-test results: sum time and integral, max peak.

        The outcome is passed only if every test passed; otherwise it takes
        the status of the first failing test.
        """
        failing = next((t for t in per_test if t.status is not EvalStatus.PASSED), None)
        exec_time = sum(t.time for t in per_test)
        peak = max((t.peak for t in per_test), default=0)
        if failing is not None:
            return cls(
                status=failing.status,
                exec_time=exec_time,
                peak_memory=peak,
                integral=None,
                per_test=per_test,
                detail=failing.detail,
            )
        return cls(
            status=EvalStatus.PASSED,
            exec_time=exec_time,
            peak_memory=peak,
            integral=sum(t.integral for t in per_test),
            per_test=per_test,
        )

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            "status": self.status.value,
            "exec_time": self.exec_time,
            "peak_memory": self.peak_memory,
            "integral": self.integral,
            "per_test": [t.to_dict() for t in self.per_test],
            "runs_used": self.runs_used,
        }
        if self.detail:
            data["detail"] = self.detail
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "EvalOutcome":
        integral = data.get("integral")
        return cls(
            status=EvalStatus(data["status"]),
            exec_time=float(data.get("exec_time", 0.0)),
            peak_memory=int(data.get("peak_memory", 0)),
            integral=None if integral is None else float(integral),
            per_test=[TestResult.from_dict(t) for t in data.get("per_test", [])],
            runs_used=int(data.get("runs_used", 1)),
            detail=data.get("detail", ""),
        )
