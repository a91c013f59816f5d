"""
Metrics for the evoctl evolution engine

Normalized ET/MP/MI scores against human references, their aggregate over a
problem set, and the maximization reward derived from the raw integral.
All functions are pure.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Sequence

from ..models.eval_models import EvalOutcome
from ..models.task_models import ReferenceStats
from ..util.exceptions import EmptyInput, ZeroMeasurement

logger = logging.getLogger(__name__)

DEFAULT_CLIP_K = 5.0
REWARD_EPSILON = 0.001


@dataclass(frozen=True)
class ScoreRow:
    task_id: str
    s_T: float
    s_M: float
    s_A: float
    failed: bool
    fallback: bool = False

    @classmethod
    def failed_row(cls, task_id: str, fallback: bool = False) -> "ScoreRow":
        return cls(task_id, 0.0, 0.0, 0.0, True, fallback)


def clip(z: float, lo: float = 0.0, hi: float = DEFAULT_CLIP_K) -> float:
    if lo > hi:
        raise ValueError(f"clip bounds inverted: lo={lo} > hi={hi}")
    return min(max(z, lo), hi)


def score_task(
    task_id: str,
    ref: ReferenceStats,
    out: EvalOutcome,
    k: float = DEFAULT_CLIP_K,
    strict: bool = False,
) -> ScoreRow:
    """
    Score one task's outcome against its human reference.

    Args:
        task_id (str): Task identifier for the row
        ref (ReferenceStats): Human reference measurements
        out (EvalOutcome): The candidate's measurement
        k (float): Clip ceiling shared by every method in a run
        strict (bool): Raise ZeroMeasurement instead of returning a failed row

    Returns:
        ScoreRow: Clipped ratios, or an all-zero failed row
    """
    if not out.passed or out.integral is None:
        return ScoreRow.failed_row(task_id)

    measurements = (out.exec_time, float(out.peak_memory), out.integral)
    if min(measurements) <= 0:
        if strict:
            raise ZeroMeasurement(details={"task_id": task_id})
        logger.warning(
            "Zero measurement for passed candidate, scoring as failed",
            extra={"task_id": task_id},
        )
        return ScoreRow.failed_row(task_id)

    return ScoreRow(
        task_id=task_id,
        s_T=clip(ref.exec_time / out.exec_time, 0.0, k),
        s_M=clip(ref.peak_memory / out.peak_memory, 0.0, k),
        s_A=clip(ref.integral / out.integral, 0.0, k),
        failed=False,
    )


def aggregate(rows: Sequence[ScoreRow]) -> Dict[str, float]:
    """
    Mean score per metric, in percent.

    Raises:
        EmptyInput: If rows is empty
    """
    if not rows:
        raise EmptyInput()
    n = len(rows)
    return {
        "ET": math.fsum(r.s_T for r in rows) / n * 100.0,
        "MP": math.fsum(r.s_M for r in rows) / n * 100.0,
        "MI": math.fsum(r.s_A for r in rows) / n * 100.0,
    }


def reward(integral: float) -> float:
    """Maximization reward 1 / (integral + epsilon); only for passed candidates."""
    return 1.0 / (integral + REWARD_EPSILON)


def reward_for(out: EvalOutcome) -> float:
    if not out.passed or out.integral is None:
        return 0.0
    return reward(out.integral)
