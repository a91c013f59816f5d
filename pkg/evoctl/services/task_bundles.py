"""
Task bundle reading and writing.

A bundle is a directory holding ``task.json`` (statement, language, limits,
optional reference statistics) and ``tests/NNN.in`` / ``tests/NNN.out``
fixture pairs.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List

from ..models.task_models import (
    DEFAULT_MEMORY_LIMIT,
    DEFAULT_TIME_LIMIT,
    Comparison,
    Language,
    ReferenceStats,
    TaskSpec,
    TestCase,
)
from ..util.exceptions import EvoctlError, NotFoundError, ValidationError

logger = logging.getLogger(__name__)

TASK_FILE = "task.json"
TESTS_DIR = "tests"


@dataclass
class IngestResult:
    """Valid tasks in canonical order plus per-bundle validation errors."""

    tasks: List[TaskSpec] = field(default_factory=list)
    errors: Dict[str, str] = field(default_factory=dict)

    @property
    def task_ids(self) -> List[str]:
        return [task.task_id for task in self.tasks]


def load_task(bundle_dir: Path) -> TaskSpec:
    """
    Load one task bundle.

    Raises:
        ValidationError: If the bundle is malformed or violates a TaskSpec
            invariant; the message names the task
    """
    bundle_dir = Path(bundle_dir)
    name = bundle_dir.name
    task_file = bundle_dir / TASK_FILE
    if not task_file.is_file():
        raise ValidationError(f"Task '{name}' has no {TASK_FILE}", details={"task_id": name})
    try:
        header = json.loads(task_file.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ValidationError(f"Task '{name}': malformed {TASK_FILE}: {e}") from e

    task_id = str(header.get("task_id") or name)
    tests_dir = bundle_dir / TESTS_DIR
    if not tests_dir.is_dir():
        raise ValidationError(f"Task '{task_id}' has no {TESTS_DIR}/ directory", details={"task_id": task_id})

    inputs = sorted(tests_dir.glob("*.in"))
    comparisons = header.get("comparisons") or []
    tests: List[TestCase] = []
    for index, input_path in enumerate(inputs):
        output_path = input_path.with_suffix(".out")
        if not output_path.is_file():
            raise ValidationError(
                f"Task '{task_id}': {input_path.name} has no expected output",
                details={"task_id": task_id},
            )
        try:
            comparison = Comparison(comparisons[index]) if index < len(comparisons) else Comparison.TOKEN_WISE
        except ValueError as e:
            raise ValidationError(f"Task '{task_id}': {e}", details={"task_id": task_id}) from e
        tests.append(
            TestCase(
                input=input_path.read_bytes(),
                expected_output=output_path.read_bytes(),
                comparison=comparison,
            )
        )

    try:
        language = Language(str(header.get("language", "python")).lower())
    except ValueError as e:
        raise ValidationError(f"Task '{task_id}': unsupported language", details={"task_id": task_id}) from e

    reference = header.get("reference")
    try:
        return TaskSpec(
            task_id=task_id,
            statement=str(header.get("statement", "")),
            language=language,
            tests=tests,
            time_limit=float(header.get("time_limit", DEFAULT_TIME_LIMIT)),
            memory_limit=int(header.get("memory_limit", DEFAULT_MEMORY_LIMIT)),
            reference=ReferenceStats.from_dict(reference) if reference else None,
            metadata=dict(header.get("metadata") or {}),
        )
    except (TypeError, ValueError) as e:
        raise ValidationError(f"Task '{task_id}': {e}", details={"task_id": task_id}) from e


def ingest_tasks(tasks_dir: Path) -> IngestResult:
    """
    Load every bundle under a directory, sorted by task id.

    Invalid bundles are collected in ``errors`` instead of raising.

    Raises:
        NotFoundError: If the directory does not exist
        ValidationError: If two bundles declare the same task id
    """
    tasks_dir = Path(tasks_dir)
    if not tasks_dir.is_dir():
        raise NotFoundError(f"Task directory not found: {tasks_dir}")

    result = IngestResult()
    for bundle in sorted(p for p in tasks_dir.iterdir() if p.is_dir()):
        try:
            result.tasks.append(load_task(bundle))
        except EvoctlError as e:
            result.errors[bundle.name] = e.message
            logger.warning(f"Skipping invalid task bundle: {e.message}")

    result.tasks.sort(key=lambda task: task.task_id)
    seen = set()
    for task in result.tasks:
        if task.task_id in seen:
            raise ValidationError(f"Duplicate task id '{task.task_id}'")
        seen.add(task.task_id)

    logger.info(
        f"Ingested {len(result.tasks)} tasks ({len(result.errors)} invalid)",
        extra={"tasks_dir": str(tasks_dir)},
    )
    return result


def write_task_bundle(task: TaskSpec, root: Path) -> Path:
    """Write a TaskSpec as ``<root>/<task_id>/``; returns the bundle path."""
    bundle_dir = Path(root) / task.task_id
    tests_dir = bundle_dir / TESTS_DIR
    tests_dir.mkdir(parents=True, exist_ok=True)
    (bundle_dir / TASK_FILE).write_text(
        json.dumps(task.header_dict(), indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
    for index, test in enumerate(task.tests):
        (tests_dir / f"{index:03d}.in").write_bytes(test.input)
        (tests_dir / f"{index:03d}.out").write_bytes(test.expected_output)
    return bundle_dir
