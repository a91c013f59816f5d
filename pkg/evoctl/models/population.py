"""
Population model for the evoctl evolution engine

The population is an append-only archive of every candidate created for one
task, plus the step records of the loop that created them.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, List

from ..util.exceptions import NoEvaluatedCandidate, ValidationError
from .candidate_models import Candidate, StepRecord


@dataclass
class Population:
    """
    Archive of candidates for one task.

    Members are never removed or replaced. Failed candidates stay with reward
    0 and therefore never get selected.
    """

    task_id: str
    members: List[Candidate] = field(default_factory=list)
    steps: List[StepRecord] = field(default_factory=list)
    _index: Dict[int, Candidate] = field(default_factory=dict, repr=False)

    def next_id(self) -> int:
        return len(self.members)

    def add(self, candidate: Candidate) -> None:
        if candidate.candidate_id in self._index:
            raise ValidationError(
                f"Duplicate candidate id {candidate.candidate_id}",
                details={"task_id": self.task_id},
            )
        for parent_id in candidate.origin.parent_ids:
            if parent_id not in self._index:
                raise ValidationError(
                    f"Candidate {candidate.candidate_id} references unknown "
                    f"parent {parent_id}",
                )
        self.members.append(candidate)
        self._index[candidate.candidate_id] = candidate

    def add_step(self, step: StepRecord) -> None:
        self.steps.append(step)

    def get(self, candidate_id: int) -> Candidate:
        return self._index[candidate_id]

    def viable(self) -> List[Candidate]:
        """Members with positive reward, in insertion order."""
        return [m for m in self.members if m.reward > 0]

    def best_candidate(self) -> Candidate:
        """
        Return the member with maximal reward, earliest candidate on ties.

        Raises:
            NoEvaluatedCandidate: If no member passed evaluation
        """
        best = None
        for member in self.members:
            if not member.passed:
                continue
            if best is None or member.reward > best.reward:
                best = member
        if best is None:
            raise NoEvaluatedCandidate(details={"task_id": self.task_id})
        return best

    def best_so_far_series(self) -> List[float]:
        """
        Running minimum of the raw integral per iteration.

        Index t holds the minimum integral among passed members created at
        iteration <= t; +inf until a member passes.
        """
        if not self.members:
            return []
        last = max(m.iteration for m in self.members)
        per_iteration = [math.inf] * (last + 1)
        for member in self.members:
            integral = member.integral
            if integral is not None and integral < per_iteration[member.iteration]:
                per_iteration[member.iteration] = integral

        series = []
        running = math.inf
        for value in per_iteration:
            running = min(running, value)
            series.append(running)
        return series
