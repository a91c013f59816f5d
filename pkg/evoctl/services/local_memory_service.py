"""
Intra-task memory: reflection after each step and compression past a token
threshold.
"""

import logging
from typing import Sequence

from ..models.candidate_models import Candidate
from ..models.memory_models import LocalMemory, Reflection
from ..models.task_models import TaskSpec
from ..util.exceptions import GenerationExhausted, TransportError
from .generator import Generator

logger = logging.getLogger(__name__)

DEFAULT_COMPRESS_THRESHOLD = 1000


def reflect_local(
    task: TaskSpec,
    parents: Sequence[Candidate],
    child: Candidate,
    delta: float,
    gen: Generator,
    memory: LocalMemory,
) -> Reflection:
    """
    Extract memory items from one step.

    Positive deltas go to the success prompt, everything else to the failure
    prompt. An unparseable or unreachable generator yields an empty
    reflection and the step proceeds without new memory.
    """
    try:
        if delta > 0:
            return gen.reflect_success(task, parents, child, memory, delta)
        return gen.reflect_failure(task, parents, child, memory, delta)
    except (GenerationExhausted, TransportError) as e:
        logger.warning(
            f"Reflection skipped: {e.message}",
            extra={"task_id": task.task_id, "candidate_id": child.candidate_id},
        )
        return Reflection()


def compress_local(
    task: TaskSpec,
    memory: LocalMemory,
    gen: Generator,
    threshold_tokens: int = DEFAULT_COMPRESS_THRESHOLD,
) -> LocalMemory:
    """
    Compress the memory when its estimate exceeds the threshold.

    The generator is never called at or below the threshold. On parse failure
    the original memory is kept and compression is retried next step.
    """
    before = memory.token_estimate
    if before <= threshold_tokens:
        return memory

    try:
        compressed = gen.compress(task, memory)
    except (GenerationExhausted, TransportError) as e:
        logger.warning(
            f"Compression deferred: {e.message}",
            extra={"task_id": task.task_id, "tokens": before},
        )
        return memory

    compressed.merge_duplicates()
    after = compressed.token_estimate
    logger.info(
        f"Local memory compressed from {before} to {after} tokens",
        extra={"task_id": task.task_id},
    )
    if after >= threshold_tokens:
        logger.warning(
            "Compressed local memory still exceeds the threshold",
            extra={"task_id": task.task_id, "tokens": after, "threshold": threshold_tokens},
        )
    return compressed
