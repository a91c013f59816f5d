"""
Trajectory logging for evolution runs

Each task's run is persisted as JSONL: one record per candidate, one per
step and a closing summary record. Records carry ``schema: 1``.
"""

import json
import logging
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional

from ..models.candidate_models import Candidate, StepRecord
from ..models.population import Population
from ..util.exceptions import NotFoundError, ValidationError

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
KIND_CANDIDATE = "candidate"
KIND_STEP = "step"
KIND_SUMMARY = "summary"


class TrajectoryWriter:
    """
    Append-only JSONL writer for one task's trajectory.

    Records are flushed line by line so an interrupted run leaves a readable
    prefix.
    """

    def __init__(self, path: Path) -> None:
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._count = 0

    def reset(self) -> None:
        """Truncate the file; used when a partial task is rerun."""
        with self._lock:
            self.path.write_text("", encoding="utf-8")
            self._count = 0

    def _append(self, kind: str, payload: Dict[str, Any]) -> None:
        record = {"schema": SCHEMA_VERSION, "kind": kind, **payload}
        line = json.dumps(record, ensure_ascii=False, allow_nan=False)
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as f:
                f.write(line + "\n")
            self._count += 1

    def log_candidate(self, candidate: Candidate) -> None:
        self._append(KIND_CANDIDATE, candidate.to_dict())

    def log_step(self, step: StepRecord) -> None:
        self._append(KIND_STEP, step.to_dict())

    def log_summary(self, summary: Dict[str, Any]) -> None:
        self._append(KIND_SUMMARY, summary)
        logger.debug(
            "Trajectory summary written",
            extra={"path": str(self.path), "records": self._count},
        )

    @property
    def records_written(self) -> int:
        return self._count


@dataclass
class Trajectory:
    """Parsed trajectory file."""

    task_id: str
    candidates: List[Candidate] = field(default_factory=list)
    steps: List[StepRecord] = field(default_factory=list)
    summary: Optional[Dict[str, Any]] = None

    @property
    def complete(self) -> bool:
        return self.summary is not None

    def to_population(self) -> Population:
        """Rebuild the population archive in its original insertion order."""
        pop = Population(task_id=self.task_id)
        for candidate in self.candidates:
            pop.add(candidate)
        for step in self.steps:
            pop.add_step(step)
        return pop


def iter_records(path: Path) -> Iterator[Dict[str, Any]]:
    """
    Yield the records of a trajectory file.

    Raises:
        NotFoundError: If the file does not exist
        ValidationError: On malformed lines or unknown schema versions
    """
    path = Path(path)
    if not path.exists():
        raise NotFoundError(f"Trajectory not found: {path}")
    with open(path, encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise ValidationError(
                    f"Malformed trajectory line {line_number} in {path}: {e}",
                ) from e
            if record.get("schema") != SCHEMA_VERSION:
                raise ValidationError(
                    f"Unsupported trajectory schema {record.get('schema')!r}",
                    details={"path": str(path), "line": line_number},
                )
            yield record


def read_trajectory(path: Path, task_id: str = "") -> Trajectory:
    trajectory = Trajectory(task_id=task_id or Path(path).parent.name)
    for record in iter_records(path):
        kind = record.get("kind")
        if kind == KIND_CANDIDATE:
            trajectory.candidates.append(Candidate.from_dict(record))
        elif kind == KIND_STEP:
            trajectory.steps.append(StepRecord.from_dict(record))
        elif kind == KIND_SUMMARY:
            trajectory.summary = record
        else:
            logger.warning(f"Skipping trajectory record of unknown kind '{kind}'")
    return trajectory
