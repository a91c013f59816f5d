"""
Response parsers for generator output

Every parser either returns a typed value or raises ParseError with a short
machine-readable reason. No other exception escapes, whatever the input.
"""

import json
import re
from typing import Any, Dict, List, Optional

from ..models.candidate_models import SlotDiagnosis, Sketch
from ..models.memory_models import (
    DirectionItem,
    DirectionStatus,
    ExperienceItem,
    ExperienceType,
    LocalMemory,
    Reflection,
)
from ..util.exceptions import ParseError, ValidationError

FENCED_BLOCK = re.compile(r"```[^\n`]*\n(.*?)```", re.DOTALL)
FINAL_CODE_HEADING = re.compile(r"^#+\s*(?:\d+\.\s*)?Final Code\b.*$", re.MULTILINE | re.IGNORECASE)
MAX_DISTILLED_ITEMS = 5


def _as_object(candidate: str) -> Optional[Dict[str, Any]]:
    try:
        value = json.loads(candidate)
    except (ValueError, RecursionError):
        return None
    return value if isinstance(value, dict) else None


def extract_json(text: str) -> Dict[str, Any]:
    """
    Find the JSON object in a response.

    Fenced blocks are tried first, then the first decodable object starting at
    any ``{`` in the raw text.

    Raises:
        ParseError: reason "malformed_json" when nothing decodes to an object
    """
    if not isinstance(text, str):
        raise ParseError("malformed_json", "Response is not text")

    for block in FENCED_BLOCK.findall(text):
        value = _as_object(block.strip())
        if value is not None:
            return value

    value = _as_object(text.strip())
    if value is not None:
        return value

    decoder = json.JSONDecoder()
    position = text.find("{")
    while position != -1:
        try:
            candidate, _ = decoder.raw_decode(text, position)
        except (ValueError, RecursionError):
            candidate = None
        if isinstance(candidate, dict):
            return candidate
        position = text.find("{", position + 1)
    raise ParseError("malformed_json", "No JSON object found in response")


def _string_list(data: Dict[str, Any], key: str) -> List[Any]:
    value = data.get(key)
    if not isinstance(value, list):
        raise ParseError("missing_field", f"Field '{key}' must be an array")
    return value


def _text(entry: Dict[str, Any], key: str, required: bool = True) -> str:
    value = entry.get(key, "")
    if not isinstance(value, (str, int, float)):
        raise ParseError("wrong_type", f"Field '{key}' must be text")
    value = str(value).strip()
    if required and not value:
        raise ParseError("empty_entry", f"Field '{key}' is empty")
    return value


def parse_strategies(text: str, k: int) -> List[Sketch]:
    """
    Parse the planning response into exactly k sketches.

    Raises:
        ParseError: "malformed_json", "wrong_count" or "empty_entry"
    """
    data = extract_json(text)
    strategies = _string_list(data, "strategies")
    if len(strategies) != k:
        raise ParseError(
            "wrong_count",
            f"Expected {k} strategies, got {len(strategies)}",
        )
    sketches = []
    for index, strategy in enumerate(strategies):
        if not isinstance(strategy, str) or not strategy.strip():
            raise ParseError("empty_entry", f"Strategy {index} is empty")
        sketches.append(Sketch(sketch_id=index, strategy_text=strategy.strip()))
    return sketches


def parse_final_code(text: str) -> str:
    """
    Return the last fenced code block after the Final Code heading, or the
    last fenced block of the response when there is no heading.

    Raises:
        ParseError: "no_code_block" or "empty_code"
    """
    if not isinstance(text, str):
        raise ParseError("no_code_block", "Response is not text")
    headings = list(FINAL_CODE_HEADING.finditer(text))
    tail = text[headings[-1].end():] if headings else text
    blocks = FENCED_BLOCK.findall(tail)
    if not blocks and headings:
        blocks = FENCED_BLOCK.findall(text)
    if not blocks:
        raise ParseError("no_code_block", "No fenced code block in response")
    code = blocks[-1].strip("\n")
    if not code.strip():
        raise ParseError("empty_code", "Final code block is empty")
    return code + "\n"


def parse_diagnosis(text: str, code: Optional[str] = None) -> SlotDiagnosis:
    """
    Parse and validate a slot diagnosis.

    Raises:
        ParseError: "malformed_json" or "invalid_diagnosis"
    """
    data = extract_json(text)
    try:
        diagnosis = SlotDiagnosis.from_dict(data)
        diagnosis.validate(code)
    except ValidationError as e:
        raise ParseError("invalid_diagnosis", e.message) from e
    return diagnosis


def _direction_status(value: Any) -> DirectionStatus:
    label = str(value).strip().lower()
    for status in DirectionStatus:
        if status.value.lower() == label:
            return status
    raise ParseError("unknown_status", f"Unknown direction status '{value}'")


def _experience_type(value: Any) -> ExperienceType:
    label = str(value).strip().lower()
    for kind in ExperienceType:
        if kind.value.lower() == label:
            return kind
    raise ParseError("unknown_type", f"Unknown experience type '{value}'")


def _experience(entry: Any) -> ExperienceItem:
    if not isinstance(entry, dict):
        raise ParseError("wrong_type", "Experience entries must be objects")
    return ExperienceItem(
        type=_experience_type(entry.get("type", "")),
        title=_text(entry, "title"),
        description=_text(entry, "description", required=False),
        content=_text(entry, "content", required=False),
    )


def _direction(entry: Any, with_counts: bool) -> DirectionItem:
    if not isinstance(entry, dict):
        raise ParseError("wrong_type", "Direction entries must be objects")
    item = DirectionItem(
        direction=_text(entry, "direction"),
        description=_text(entry, "description", required=False),
        status=_direction_status(entry.get("status", "")),
    )
    if with_counts:
        try:
            item.success_count = max(int(entry.get("success_count", 0)), 0)
            item.failure_count = max(int(entry.get("failure_count", 0)), 0)
        except (TypeError, ValueError) as e:
            raise ParseError("wrong_type", "Direction counts must be integers") from e
    return item


def parse_reflection(text: str) -> Reflection:
    """Parse a success or failure reflection."""
    data = extract_json(text)
    return Reflection(
        directions=[_direction(e, False) for e in _string_list(data, "new_direction_items")],
        experiences=[_experience(e) for e in _string_list(data, "new_memory_items")],
        thought_process=str(data.get("thought_process", "")),
    )


def parse_compress(text: str) -> LocalMemory:
    """Parse a compressed direction board and experience library."""
    data = extract_json(text)
    return LocalMemory(
        direction_board=[_direction(e, True) for e in _string_list(data, "direction_board")],
        experience_library=[_experience(e) for e in _string_list(data, "experience_library")],
    )


def parse_queries(text: str, n: int = 3) -> List[str]:
    """Return up to n non-empty queries; fewer are kept as they are."""
    data = extract_json(text)
    queries = [
        q.strip() for q in _string_list(data, "queries") if isinstance(q, str) and q.strip()
    ]
    if not queries:
        raise ParseError("empty_entry", "No usable queries in response")
    return queries[:n]


def parse_distill(text: str) -> List[ExperienceItem]:
    """Parse at most five task-level experiences."""
    data = extract_json(text)
    items = [_experience(e) for e in _string_list(data, "experiences")]
    if not items:
        raise ParseError("empty_entry", "No experiences in response")
    return items[:MAX_DISTILLED_ITEMS]
