"""
Candidate Models for the evoctl evolution engine

This module defines strategy sketches, candidate programs, their slot-level
diagnosis and the per-iteration step records of an evolution run.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

from ..util.exceptions import ValidationError
from .eval_models import EvalOutcome

SLOT_IDS = ("io_parsing", "core_logic", "edge_case", "perf_patch", "misc")
SLOT_STATUSES = ("ok", "bottleneck", "bug_source", "risky", "redundant")
SLOT_PRIORITIES = ("inherit", "optimize", "inspect", "low")
MIN_SLOTS = 3
MAX_SLOTS = 5


@dataclass(frozen=True)
class Sketch:
    """High-level solution strategy produced by diversified planning."""

    sketch_id: int
    strategy_text: str

    def __post_init__(self) -> None:
        if not self.strategy_text.strip():
            raise ValidationError(f"Sketch {self.sketch_id} has empty strategy text")


class OriginKind(str, Enum):
    INIT = "init"
    MUTATION = "mutation"
    CROSSOVER = "crossover"
    DIRECT_FALLBACK = "direct_fallback"


@dataclass(frozen=True)
class Origin:
    """How a candidate came to exist."""

    kind: OriginKind
    sketch_id: Optional[int] = None
    parent_ids: Tuple[int, ...] = ()

    @classmethod
    def init(cls, sketch_id: int) -> "Origin":
        return cls(OriginKind.INIT, sketch_id=sketch_id)

    @classmethod
    def mutation(cls, parent_id: int) -> "Origin":
        return cls(OriginKind.MUTATION, parent_ids=(parent_id,))

    @classmethod
    def crossover(cls, parent_a_id: int, parent_b_id: int) -> "Origin":
        return cls(OriginKind.CROSSOVER, parent_ids=(parent_a_id, parent_b_id))

    @classmethod
    def direct_fallback(cls) -> "Origin":
        return cls(OriginKind.DIRECT_FALLBACK)

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {"kind": self.kind.value}
        if self.sketch_id is not None:
            data["sketch_id"] = self.sketch_id
        if self.parent_ids:
            data["parent_ids"] = list(self.parent_ids)
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Origin":
        return cls(
            kind=OriginKind(data["kind"]),
            sketch_id=data.get("sketch_id"),
            parent_ids=tuple(data.get("parent_ids", ())),
        )


@dataclass(frozen=True)
class Slot:
    slot_id: str
    description: str
    tags: Tuple[str, ...]
    code_span: Tuple[int, int]


@dataclass(frozen=True)
class SlotVerdict:
    slot_id: str
    status: str
    correctness_level: str
    perf_level: str
    priority: str
    evidence: Tuple[str, ...]


@dataclass(frozen=True)
class SlotDiagnosis:
    """
    Decomposition of a candidate into 3-5 disjoint functional slots, with a
    per-slot verdict relative to a reference solution.
    """

    solution_name: str
    approach_summary: str
    slots: Tuple[Slot, ...]
    diagnoses: Tuple[SlotVerdict, ...]

    def validate(self, code: Optional[str] = None) -> None:
        """
        Check the structural invariants.

        Args:
            code (Optional[str]): Candidate code; when given, code spans must
                fall within its line range

        Raises:
            ValidationError: On any violation
        """
        if not MIN_SLOTS <= len(self.slots) <= MAX_SLOTS:
            raise ValidationError(f"Expected 3-5 slots, got {len(self.slots)}")
        known = {slot.slot_id for slot in self.slots}
        for verdict in self.diagnoses:
            if verdict.slot_id not in known:
                raise ValidationError(f"Diagnosis for unknown slot '{verdict.slot_id}'")
            if verdict.status not in SLOT_STATUSES:
                raise ValidationError(f"Unknown slot status '{verdict.status}'")
            if verdict.priority not in SLOT_PRIORITIES:
                raise ValidationError(f"Unknown slot priority '{verdict.priority}'")

        line_count = len(code.splitlines()) if code is not None else None
        spans = sorted(slot.code_span for slot in self.slots)
        for start, end in spans:
            if start < 1 or end < start:
                raise ValidationError(f"Invalid code span [{start}, {end}]")
            if line_count is not None and end > line_count:
                raise ValidationError(
                    f"Code span [{start}, {end}] exceeds {line_count} code lines",
                )
        for (_, prev_end), (next_start, _) in zip(spans, spans[1:]):
            if next_start <= prev_end:
                raise ValidationError("Slot code spans overlap")

    def verdict_for(self, slot_id: str) -> Optional[SlotVerdict]:
        return next((v for v in self.diagnoses if v.slot_id == slot_id), None)

    def summary(self) -> str:
        """Fixed-layout rendering used as a solution summary in prompts."""
        lines = [f"Name: {self.solution_name}", f"Approach: {self.approach_summary}"]
        for slot in self.slots:
            verdict = self.verdict_for(slot.slot_id)
            line = f"- [{slot.slot_id}] lines {slot.code_span[0]}-{slot.code_span[1]}: "
            line += slot.description
            if verdict is not None:
                line += (
                    f" | status={verdict.status} perf={verdict.perf_level}"
                    f" correctness={verdict.correctness_level}"
                    f" priority={verdict.priority}"
                )
                if verdict.evidence:
                    line += f" | evidence: {'; '.join(verdict.evidence)}"
            lines.append(line)
        return "\n".join(lines)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "solution_name": self.solution_name,
            "approach_summary": self.approach_summary,
            "slot_view": {
                "slots": [
                    {
                        "slot_id": s.slot_id,
                        "description": s.description,
                        "tags": list(s.tags),
                        "code_span": list(s.code_span),
                    }
                    for s in self.slots
                ],
                "diagnoses": [
                    {
                        "slot_id": v.slot_id,
                        "status": v.status,
                        "correctness_level": v.correctness_level,
                        "perf_level": v.perf_level,
                        "priority": v.priority,
                        "evidence": list(v.evidence),
                    }
                    for v in self.diagnoses
                ],
            },
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SlotDiagnosis":
        """
        Build a diagnosis from the decomposition JSON schema.

        Raises:
            ValidationError: If required fields are missing or mistyped
        """
        try:
            view = data["slot_view"]
            slots = tuple(
                Slot(
                    slot_id=str(s["slot_id"]),
                    description=str(s.get("description", "")),
                    tags=tuple(str(t) for t in s.get("tags", [])),
                    code_span=(int(s["code_span"][0]), int(s["code_span"][1])),
                )
                for s in view["slots"]
            )
            diagnoses = tuple(
                SlotVerdict(
                    slot_id=str(d["slot_id"]),
                    status=str(d["status"]),
                    correctness_level=str(d.get("correctness_level", "unknown")),
                    perf_level=str(d.get("perf_level", "unknown")),
                    priority=str(d.get("priority", "low")),
                    evidence=tuple(str(e) for e in d.get("evidence", [])),
                )
                for d in view.get("diagnoses", [])
            )
            return cls(
                solution_name=str(data.get("solution_name", "")),
                approach_summary=str(data.get("approach_summary", "")),
                slots=slots,
                diagnoses=diagnoses,
            )
        except (KeyError, TypeError, ValueError, IndexError) as e:
            raise ValidationError(f"Malformed slot diagnosis: {e}") from e


@dataclass
class Candidate:
    """
    One concrete program with its evaluation outcome, reward and lineage.

    reward is 0 unless eval is present and passed.
    """

    candidate_id: int
    code: str
    origin: Origin
    iteration: int = 0
    eval: Optional[EvalOutcome] = None
    reward: float = 0.0
    diagnosis: Optional[SlotDiagnosis] = None
    error: str = ""

    @property
    def passed(self) -> bool:
        return self.eval is not None and self.eval.passed

    @property
    def integral(self) -> Optional[float]:
        return self.eval.integral if self.passed and self.eval is not None else None

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            "candidate_id": self.candidate_id,
            "code": self.code,
            "origin": self.origin.to_dict(),
            "iteration": self.iteration,
            "eval": self.eval.to_dict() if self.eval else None,
            "reward": self.reward,
            "diagnosis": self.diagnosis.to_dict() if self.diagnosis else None,
        }
        if self.error:
            data["error"] = self.error
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Candidate":
        return cls(
            candidate_id=int(data["candidate_id"]),
            code=data["code"],
            origin=Origin.from_dict(data["origin"]),
            iteration=int(data.get("iteration", 0)),
            eval=EvalOutcome.from_dict(data["eval"]) if data.get("eval") else None,
            reward=float(data.get("reward", 0.0)),
            diagnosis=(
                SlotDiagnosis.from_dict(data["diagnosis"]) if data.get("diagnosis") else None
            ),
            error=data.get("error", ""),
        )


class Operator(str, Enum):
    MUTATION = "mutation"
    CROSSOVER = "crossover"


@dataclass
class StepRecord:
    """
    One iteration of the evolution loop.

    delta is reward(child) - reward(parent_ids[0]). ``substituted`` marks a crossover
    step that degraded to mutation for lack of a second viable parent.
    """

    iteration: int
    operator: Operator
    parent_ids: Tuple[int, ...]
    child_id: int
    delta: float
    retrieved_ids: List[str] = field(default_factory=list)
    wall_time: float = 0.0
    queries: List[str] = field(default_factory=list)
    substituted: bool = False

    def __post_init__(self) -> None:
        expected = 1 if self.operator is Operator.MUTATION else 2
        if len(self.parent_ids) != expected:
            raise ValidationError(
                f"{self.operator.value} step needs {expected} parent(s), "
                f"got {len(self.parent_ids)}",
            )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "iteration": self.iteration,
            "operator": self.operator.value,
            "parent_ids": list(self.parent_ids),
            "child_id": self.child_id,
            "delta": self.delta,
            "retrieved_ids": list(self.retrieved_ids),
            "wall_time": self.wall_time,
            "queries": list(self.queries),
            "substituted": self.substituted,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "StepRecord":
        return cls(
            iteration=int(data["iteration"]),
            operator=Operator(data["operator"]),
            parent_ids=tuple(int(p) for p in data["parent_ids"]),
            child_id=int(data["child_id"]),
            delta=float(data["delta"]),
            retrieved_ids=list(data.get("retrieved_ids", [])),
            wall_time=float(data.get("wall_time", 0.0)),
            queries=list(data.get("queries", [])),
            substituted=bool(data.get("substituted", False)),
        )


def describe_candidates(candidates: Sequence[Candidate]) -> str:
    """Render candidates with their scores as prompt context."""
    blocks = []
    for candidate in candidates:
        score = (
            f"integral={candidate.integral:.4f} MB*s"
            if candidate.integral is not None
            else f"status={candidate.eval.status.value if candidate.eval else 'not_run'}"
        )
        blocks.append(
            f"### Candidate {candidate.candidate_id} ({score})\n```\n{candidate.code}\n```"
        )
    return "\n\n".join(blocks) if blocks else "(empty)"


DIRECT_FALLBACK_ID = -1


@dataclass
class DirectBaseline:
    """Single-turn solution produced by ``evoctl direct`` for one task."""

    task_id: str
    code: str
    eval: Optional[EvalOutcome] = None

    @property
    def passed(self) -> bool:
        return self.eval is not None and self.eval.passed

    def as_fallback(self, reward: float) -> Candidate:
        """The baseline as a direct_fallback candidate outside the population."""
        return Candidate(
            candidate_id=DIRECT_FALLBACK_ID,
            code=self.code,
            origin=Origin.direct_fallback(),
            eval=self.eval,
            reward=reward if self.passed else 0.0,
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "task_id": self.task_id,
            "code": self.code,
            "eval": self.eval.to_dict() if self.eval else None,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "DirectBaseline":
        return cls(
            task_id=str(data["task_id"]),
            code=data.get("code", ""),
            eval=EvalOutcome.from_dict(data["eval"]) if data.get("eval") else None,
        )
