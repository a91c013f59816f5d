"""Tests for the offline mock backend and its cost landscape."""

import numpy as np
import pytest

from evoctl.models.candidate_models import Candidate, Origin
from evoctl.models.context_models import Context
from evoctl.models.eval_models import EvalStatus
from evoctl.services.mock_generator import (
    FIRST_SLOT_LINE,
    LandscapeEvaluator,
    MockBackend,
    MockLandscape,
    MockSettings,
    mock_generate,
    read_assignment,
    render_program,
    slot_lines,
    synthetic_task,
)
from evoctl.services.response_parsers import parse_diagnosis, parse_final_code
from evoctl.util.exceptions import ConfigError, ValidationError

SETTINGS = MockSettings()

# io_parsing v1 fails the tests; every slot's v0 is the cheapest passing variant
LANDSCAPE = MockLandscape(
    slot_costs={
        "io_parsing": ((0, 10.0), (1, 200.0), (2, 150.0)),
        "core_logic": ((0, 20.0), (1, 180.0), (2, 120.0)),
        "edge_case": ((0, 15.0), (1, 160.0), (2, 140.0)),
    },
    bug_variants=frozenset({("io_parsing", 1)}),
)


def _candidate(candidate_id: int, assignment: dict) -> Candidate:
    return Candidate(candidate_id, render_program(assignment, LANDSCAPE, SETTINGS), Origin.init(candidate_id))


def _respond(op: str, **inputs) -> str:
    inputs.setdefault("task", synthetic_task("echo-000"))
    return mock_generate(op, inputs, LANDSCAPE, np.random.default_rng(0), SETTINGS)


class TestMockLandscape:
    def test_generate_invariants(self) -> None:
        landscape = MockLandscape.generate(7, n_slots=5, n_variants=8, bug_slots=2)
        assert len(landscape.slot_ids) == 5
        assert len(landscape.bug_variants) == 2
        for slot in landscape.slot_ids:
            best = landscape.best_variant(slot)
            assert not landscape.is_bug(slot, best)
            assert 10.0 <= landscape.cost_of(slot, best) <= 30.0
        assert landscape.optimum_cost <= 150.0

    def test_generate_is_seeded(self) -> None:
        assert MockLandscape.generate(3) == MockLandscape.generate(3)
        assert MockLandscape.generate(3) != MockLandscape.generate(4)

    def test_slot_without_passing_variant(self) -> None:
        with pytest.raises(ValidationError):
            MockLandscape(slot_costs={"io_parsing": ((0, 1.0),)}, bug_variants=frozenset({("io_parsing", 0)}))

    def test_settings_validation(self) -> None:
        with pytest.raises(ConfigError):
            MockSettings(n_slots=2)
        with pytest.raises(ConfigError):
            MockSettings(bug_slots=6)


class TestRenderedPrograms:
    def test_header_round_trip(self) -> None:
        assignment = {"io_parsing": 2, "core_logic": 0, "edge_case": 1}
        code = render_program(assignment, LANDSCAPE, SETTINGS)
        assert read_assignment(code) == assignment
        assert slot_lines(code) == {"io_parsing": FIRST_SLOT_LINE, "core_logic": 4, "edge_case": 5}
        assert "BUGGY = False" in code

    def test_failing_assignment_is_marked(self) -> None:
        code = render_program({"io_parsing": 1, "core_logic": 0, "edge_case": 0}, LANDSCAPE, SETTINGS)
        assert "BUGGY = True" in code

    def test_foreign_code_has_no_assignment(self) -> None:
        assert read_assignment("print(input())\n") is None


class TestMockResponses:
    def test_crossover_of_complementary_parents_reaches_optimum(self) -> None:
        a = _candidate(0, {"io_parsing": 0, "core_logic": 2, "edge_case": 0})
        b = _candidate(1, {"io_parsing": 2, "core_logic": 0, "edge_case": 1})
        child = read_assignment(parse_final_code(_respond("crossover", parent_a=a, parent_b=b)))
        assert child == {"io_parsing": 0, "core_logic": 0, "edge_case": 0}
        assert LANDSCAPE.program_cost(child) == LANDSCAPE.optimum_cost

    def test_crossover_avoids_failed_directions(self) -> None:
        a = _candidate(0, {"io_parsing": 0, "core_logic": 2, "edge_case": 0})
        b = _candidate(1, {"io_parsing": 2, "core_logic": 0, "edge_case": 1})
        ctx = Context(statement="echo", local_memory_render="- [Failed] core_logic=v0")
        child = read_assignment(parse_final_code(_respond("crossover", parent_a=a, parent_b=b, ctx=ctx)))
        assert child["core_logic"] == 2

    def test_diagnosis_is_valid_and_names_the_bug(self) -> None:
        code = _candidate(0, {"io_parsing": 1, "core_logic": 2, "edge_case": 0}).code
        diagnosis = parse_diagnosis(_respond("diagnose", target_code=code), code)
        assert diagnosis.verdict_for("io_parsing").status == "bug_source"
        assert diagnosis.verdict_for("core_logic").status == "bottleneck"
        assert diagnosis.verdict_for("edge_case").status == "ok"

    def test_refine_fixes_the_bug_source_first(self) -> None:
        parent = _candidate(0, {"io_parsing": 1, "core_logic": 2, "edge_case": 0})
        diagnosis = parse_diagnosis(_respond("diagnose", target_code=parent.code), parent.code)

        child = read_assignment(parse_final_code(_respond("refine", parent=parent, diagnosis=diagnosis)))
        assert child == {"io_parsing": 0, "core_logic": 2, "edge_case": 0}

        ctx = Context(statement="echo", local_memory_render="- [Failed] io_parsing=v0")
        child = read_assignment(parse_final_code(_respond("refine", parent=parent, diagnosis=diagnosis, ctx=ctx)))
        assert child["io_parsing"] == 2

    def test_refine_keeps_an_optimal_parent(self) -> None:
        parent = _candidate(0, {"io_parsing": 0, "core_logic": 0, "edge_case": 0})
        diagnosis = parse_diagnosis(_respond("diagnose", target_code=parent.code), parent.code)
        assert parse_final_code(_respond("refine", parent=parent, diagnosis=diagnosis)) == parent.code

    def test_unknown_operation(self) -> None:
        with pytest.raises(ValidationError):
            _respond("poetry")


class TestLandscapeEvaluator:
    def setup_method(self) -> None:
        self.backend = MockBackend(SETTINGS, landscapes={"echo-000": LANDSCAPE})
        self.evaluator = LandscapeEvaluator(self.backend)
        self.task = synthetic_task("echo-000")

    def test_passing_program_costs_its_landscape_value(self) -> None:
        code = _candidate(0, {"io_parsing": 0, "core_logic": 2, "edge_case": 0}).code
        outcome = self.evaluator.measure(code, self.task)
        assert outcome.passed
        assert outcome.integral == pytest.approx(145.0)
        assert outcome.peak_memory == SETTINGS.hold_mb * 1024 * 1024
        assert len(outcome.per_test) == len(self.task.tests)

    def test_failing_program(self) -> None:
        code = _candidate(0, {"io_parsing": 1, "core_logic": 0, "edge_case": 0}).code
        outcome = self.evaluator.measure(code, self.task)
        assert outcome.status is EvalStatus.WRONG_ANSWER
        assert outcome.integral is None

    def test_unrecognized_program(self) -> None:
        assert self.evaluator.measure("print(1)\n", self.task).status is EvalStatus.COMPILE_ERROR

    def test_landscapes_are_per_task_and_seeded(self) -> None:
        one = MockBackend(SETTINGS, seed=1)
        two = MockBackend(SETTINGS, seed=1)
        assert one.landscape_for("echo-001") == two.landscape_for("echo-001")
        assert one.landscape_for("echo-001") != one.landscape_for("echo-002")
