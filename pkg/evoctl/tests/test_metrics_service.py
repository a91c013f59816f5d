"""Tests for normalized scoring, aggregation and reward."""

import numpy as np
import pytest

from evoctl.models.eval_models import EvalOutcome, EvalStatus
from evoctl.models.task_models import ReferenceStats
from evoctl.services.metrics_service import (
    REWARD_EPSILON,
    ScoreRow,
    aggregate,
    clip,
    reward,
    reward_for,
    score_task,
)
from evoctl.util.exceptions import EmptyInput, ZeroMeasurement

MB = 1024 * 1024

# (reference t, MB, MB·s), outcome (t, MB, MB·s) or a failure status, expected (s_T, s_M, s_A)
FIXTURES = [
    ((1, 100, 100), (1, 100, 100), (1, 1, 1)),
    ((2, 100, 50), (1, 50, 25), (2, 2, 2)),
    ((1, 100, 100), (2, 200, 400), (0.5, 0.5, 0.25)),
    ((10, 100, 100), (1, 10, 1), (5, 5, 5)),
    ((1, 100, 100), (0.5, 100, 50), (2, 1, 2)),
    ((3, 30, 90), (4, 40, 120), (0.75, 0.75, 0.75)),
    ((1, 100, 100), EvalStatus.WRONG_ANSWER, (0, 0, 0)),
    ((1, 100, 100), EvalStatus.TIMEOUT, (0, 0, 0)),
    ((1, 64, 10), (0.2, 64, 2), (5, 1, 5)),
    ((1, 64, 10), (0.19, 64, 1.9), (5, 1, 5)),
    ((5, 500, 250), (2, 250, 100), (2.5, 2, 2.5)),
    ((1, 1, 1), (4, 8, 16), (0.25, 0.125, 0.0625)),
    ((0.3, 30, 3), (0.6, 15, 1.5), (0.5, 2, 2)),
    ((1, 100, 100), EvalStatus.MEMORY_EXCEEDED, (0, 0, 0)),
    ((7, 70, 700), (7, 35, 175), (1, 2, 4)),
    ((1, 100, 1), (1, 100, 0.1), (1, 1, 5)),
    ((2, 10, 4), (8, 40, 16), (0.25, 0.25, 0.25)),
    ((9, 90, 45), (3, 30, 9), (3, 3, 5)),
    ((1, 100, 100), EvalStatus.RUNTIME_ERROR, (0, 0, 0)),
    ((1, 50, 20), (1.25, 40, 25), (0.8, 1.25, 0.8)),
]
EXPECTED_AGGREGATE = {"ET": 152.75, "MP": 119.375, "MI": 203.0625}


def _reference(t: float, mb: float, a: float) -> ReferenceStats:
    return ReferenceStats(exec_time=t, peak_memory=mb * MB, integral=a)


def _outcome(spec) -> EvalOutcome:
    if isinstance(spec, EvalStatus):
        return EvalOutcome.failure(spec)
    t, mb, a = spec
    return EvalOutcome(status=EvalStatus.PASSED, exec_time=t, peak_memory=int(mb * MB), integral=a)


def _rows() -> list:
    return [
        score_task(f"t{i:02d}", _reference(*ref), _outcome(out), k=5)
        for i, (ref, out, _) in enumerate(FIXTURES)
    ]


class TestScoreTask:
    @pytest.mark.parametrize("index", range(len(FIXTURES)))
    def test_fixture_ratios(self, index: int) -> None:
        ref, out, expected = FIXTURES[index]
        row = score_task("task", _reference(*ref), _outcome(out), k=5)
        assert (row.s_T, row.s_M, row.s_A) == pytest.approx(expected, abs=1e-9)
        assert row.failed is isinstance(out, EvalStatus)

    def test_zero_measurement_scores_as_failed(self) -> None:
        out = EvalOutcome(status=EvalStatus.PASSED, exec_time=0.0, peak_memory=MB, integral=1.0)
        row = score_task("task", _reference(1, 1, 1), out)
        assert row == ScoreRow.failed_row("task")

    def test_zero_measurement_strict_raises(self) -> None:
        out = EvalOutcome(status=EvalStatus.PASSED, exec_time=1.0, peak_memory=MB, integral=0.0)
        with pytest.raises(ZeroMeasurement):
            score_task("task", _reference(1, 1, 1), out, strict=True)

    def test_clip_bounds(self) -> None:
        assert clip(7.0) == 5.0
        assert clip(-1.0) == 0.0
        with pytest.raises(ValueError):
            clip(1.0, lo=2.0, hi=1.0)


class TestAggregate:
    def test_fixture_aggregate(self) -> None:
        result = aggregate(_rows())
        for key, value in EXPECTED_AGGREGATE.items():
            assert result[key] == pytest.approx(value, abs=1e-9)

    def test_empty_raises(self) -> None:
        with pytest.raises(EmptyInput):
            aggregate([])

    def test_matches_naive_resummation(self) -> None:
        rng = np.random.default_rng(11)
        for _ in range(200):
            values = rng.uniform(0.0, 5.0, size=(int(rng.integers(1, 60)), 3))
            rows = [ScoreRow(f"t{i}", *map(float, v), failed=False) for i, v in enumerate(values)]
            result = aggregate(rows)
            n = len(rows)
            naive = [sum(float(v[j]) for v in values) / n * 100.0 for j in range(3)]
            assert result["ET"] == pytest.approx(naive[0], abs=1e-12 * max(1.0, naive[0]))
            assert result["MP"] == pytest.approx(naive[1], abs=1e-12 * max(1.0, naive[1]))
            assert result["MI"] == pytest.approx(naive[2], abs=1e-12 * max(1.0, naive[2]))


class TestReward:
    def test_reward_is_inverse_integral(self) -> None:
        assert reward(9.999) == pytest.approx(1.0 / (9.999 + REWARD_EPSILON))

    def test_failed_outcome_has_zero_reward(self) -> None:
        assert reward_for(EvalOutcome.failure(EvalStatus.TIMEOUT)) == 0.0

    def test_lower_integral_means_higher_reward(self) -> None:
        low = EvalOutcome(status=EvalStatus.PASSED, exec_time=1, peak_memory=MB, integral=2.0)
        high = EvalOutcome(status=EvalStatus.PASSED, exec_time=1, peak_memory=MB, integral=4.0)
        assert reward_for(low) > reward_for(high) > 0
