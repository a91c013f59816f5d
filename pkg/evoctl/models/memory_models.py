"""
Memory Models for the evoctl evolution engine

Intra-task local memory (direction board + experience library) and the
cross-task experience entries kept in the global store.
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional

import numpy as np

EMPTY_MEMORY = "(empty)"
TOKENS_PER_WORD = 1.3


def estimate_tokens(text: str) -> int:
    """Whitespace-delimited word count scaled by 1.3, rounded up."""
    return int(math.ceil(len(text.split()) * TOKENS_PER_WORD))


class DirectionStatus(str, Enum):
    SUCCESS = "Success"
    FAILED = "Failed"
    NEUTRAL = "Neutral"


class ExperienceType(str, Enum):
    SUCCESS = "Success"
    FAILURE = "Failure"


@dataclass
class DirectionItem:
    direction: str
    description: str
    status: DirectionStatus
    success_count: int = 0
    failure_count: int = 0

    @property
    def key(self) -> str:
        return " ".join(self.direction.lower().split())

    def to_dict(self) -> Dict[str, Any]:
        return {
            "direction": self.direction,
            "description": self.description,
            "status": self.status.value,
            "success_count": self.success_count,
            "failure_count": self.failure_count,
        }


@dataclass(frozen=True)
class ExperienceItem:
    type: ExperienceType
    title: str
    description: str
    content: str

    def to_dict(self) -> Dict[str, str]:
        return {
            "type": self.type.value,
            "title": self.title,
            "description": self.description,
            "content": self.content,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperienceItem":
        return cls(
            type=ExperienceType(data["type"]),
            title=str(data["title"]),
            description=str(data.get("description", "")),
            content=str(data.get("content", "")),
        )


@dataclass
class Reflection:
    """Parsed output of one success/failure reflection."""

    directions: List[DirectionItem] = field(default_factory=list)
    experiences: List[ExperienceItem] = field(default_factory=list)
    thought_process: str = ""

    @property
    def neutral(self) -> bool:
        """True when the step was judged noise: every direction is Neutral."""
        return bool(self.directions) and all(
            d.status is DirectionStatus.NEUTRAL for d in self.directions
        )


@dataclass
class LocalMemory:
    """
    Direction board and experience library of one task's loop.
    """

    direction_board: List[DirectionItem] = field(default_factory=list)
    experience_library: List[ExperienceItem] = field(default_factory=list)

    @property
    def empty(self) -> bool:
        return not self.direction_board and not self.experience_library

    @property
    def token_estimate(self) -> int:
        return estimate_tokens(self.render())

    def absorb(self, reflection: Reflection) -> None:
        """
        Merge a reflection into the board and library.

        Directions with an existing name update its counts; Neutral items only
        touch the board. Experiences are dropped when the step was Neutral.
        """
        for item in reflection.directions:
            existing = self._find(item.key)
            if existing is None:
                existing = DirectionItem(item.direction, item.description, item.status)
                self.direction_board.append(existing)
            elif item.status is not DirectionStatus.NEUTRAL:
                existing.status = item.status
                existing.description = item.description or existing.description
            if item.status is DirectionStatus.SUCCESS:
                existing.success_count += 1
            elif item.status is DirectionStatus.FAILED:
                existing.failure_count += 1

        if not reflection.neutral:
            self.experience_library.extend(reflection.experiences)

    def merge_duplicates(self) -> None:
        """Collapse same-named directions, summing their counts."""
        merged: List[DirectionItem] = []
        by_key: Dict[str, DirectionItem] = {}
        for item in self.direction_board:
            target = by_key.get(item.key)
            if target is None:
                target = DirectionItem(
                    item.direction,
                    item.description,
                    item.status,
                    item.success_count,
                    item.failure_count,
                )
                by_key[item.key] = target
                merged.append(target)
                continue
            target.success_count += item.success_count
            target.failure_count += item.failure_count
            if target.success_count > target.failure_count:
                target.status = DirectionStatus.SUCCESS
            elif target.failure_count > target.success_count:
                target.status = DirectionStatus.FAILED
        self.direction_board = merged

    def _find(self, key: str) -> Optional[DirectionItem]:
        return next((d for d in self.direction_board if d.key == key), None)

    def render_directions(self) -> str:
        if not self.direction_board:
            return EMPTY_MEMORY
        return "\n".join(
            f"- [{d.status.value}] {d.direction}: {d.description} "
            f"(success={d.success_count}, failure={d.failure_count})"
            for d in self.direction_board
        )

    def render_experiences(self) -> str:
        if not self.experience_library:
            return EMPTY_MEMORY
        return "\n".join(
            f"- [{e.type.value}] {e.title}: {e.description}\n  {e.content}"
            for e in self.experience_library
        )

    def render(self) -> str:
        """Prompt rendering; the token estimate is computed over this text."""
        if self.empty:
            return EMPTY_MEMORY
        return (
            "Directions:\n"
            + self.render_directions()
            + "\nExperiences:\n"
            + self.render_experiences()
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "direction_board": [d.to_dict() for d in self.direction_board],
            "experience_library": [e.to_dict() for e in self.experience_library],
        }


@dataclass
class GlobalExperience:
    """Distilled task-level experience with its unit-norm embedding."""

    experience_id: str
    task_id: str
    items: List[ExperienceItem]
    embedding: np.ndarray
    created_at: str

    def embedding_text(self) -> str:
        """Titles and descriptions only; full content dilutes similarity."""
        return embedding_text(self.items)

    def render(self) -> str:
        lines = [f"[from task {self.task_id}]"]
        for item in self.items:
            lines.append(f"- [{item.type.value}] {item.title}: {item.description}")
            if item.content:
                lines.append(f"  {item.content}")
        return "\n".join(lines)

    def to_record(self) -> Dict[str, Any]:
        return {
            "schema": 1,
            "experience_id": self.experience_id,
            "task_id": self.task_id,
            "items": [item.to_dict() for item in self.items],
            "created_at": self.created_at,
        }


def embedding_text(items: List[ExperienceItem]) -> str:
    return "\n".join(f"{item.title}: {item.description}" for item in items)
