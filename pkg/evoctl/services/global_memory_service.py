"""
Cross-task memory operations: retrieval query generation and task-level
distillation into the global store.
"""

import logging
from typing import List, Optional, Sequence, Tuple

from ..models.candidate_models import Candidate, StepRecord
from ..models.context_models import Context
from ..models.memory_models import GlobalExperience
from ..models.population import Population
from ..models.task_models import TaskSpec
from ..util.exceptions import EmbedderUnavailable, GenerationExhausted, TransportError
from .generator import Generator
from .global_store import GlobalStore

logger = logging.getLogger(__name__)


def generate_queries(task: TaskSpec, ctx: Context, gen: Generator, n: int = 3) -> List[str]:
    """
    Ask the generator for up to n retrieval queries.

    Fewer queries than requested are used as returned. An unparseable or
    unreachable generator yields no queries and the step skips retrieval.
    """
    try:
        return gen.queries(task, ctx, n)
    except (GenerationExhausted, TransportError) as e:
        logger.warning(
            f"Query generation skipped: {e.message}",
            extra={"task_id": task.task_id, "iteration": ctx.iteration},
        )
        return []


def select_extremes(
    steps: Sequence[StepRecord], k: int
) -> Tuple[List[StepRecord], List[StepRecord]]:
    """
    Top-k improving steps (delta > 0, largest first) and top-k regressing
    steps (delta < 0, most negative first). Ties keep iteration order.
    Neither list is padded when fewer than k qualify.
    """
    improving = sorted((s for s in steps if s.delta > 0), key=lambda s: (-s.delta, s.iteration))
    regressing = sorted((s for s in steps if s.delta < 0), key=lambda s: (s.delta, s.iteration))
    return improving[:k], regressing[:k]


def distill_global(
    task: TaskSpec,
    pop: Population,
    best: Candidate,
    gen: Generator,
    store: GlobalStore,
    k: int = 5,
) -> Optional[GlobalExperience]:
    """
    Distill the finished trajectory into one global experience and persist it.

    Returns:
        Optional[GlobalExperience]: The stored entry, or None when the
            generator or embedder could not produce one (store unchanged)
    """
    improving, regressing = select_extremes(pop.steps, k)
    improvements = [(step, pop.get(step.child_id)) for step in improving]
    regressions = [(step, pop.get(step.child_id)) for step in regressing]

    try:
        items = gen.distill(task, improvements, regressions, best)
    except (GenerationExhausted, TransportError) as e:
        logger.warning(
            f"Distillation skipped: {e.message}",
            extra={"task_id": task.task_id},
        )
        return None

    try:
        return store.add(task.task_id, items)
    except EmbedderUnavailable as e:
        logger.warning(
            f"Global experience not stored: {e.message}",
            extra={"task_id": task.task_id},
        )
        return None
