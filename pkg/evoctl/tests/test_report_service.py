"""Tests for run reports: scoring, Direct gating and the CSV outputs."""

import csv
import json
from pathlib import Path
from typing import Dict, List, Optional

import pytest

from evoctl.models.candidate_models import Candidate, Operator, Origin, StepRecord
from evoctl.models.eval_models import EvalOutcome, EvalStatus
from evoctl.services.batch_runner import DIRECT_OUTCOME_FILE, STATUS_DONE, TRAJECTORY_FILE, RunManifest
from evoctl.services.report_service import build_report, write_report
from evoctl.services.trajectory_log import TrajectoryWriter
from evoctl.util.exceptions import NotFoundError

REFERENCE = {"exec_time": 2.0, "peak_memory": 2048.0, "integral": 20.0}
TASK_ORDER = ["t-evolved", "t-fallback", "t-failed", "t-noref"]


def _passed(exec_time: float, peak: int, integral: float) -> EvalOutcome:
    return EvalOutcome(status=EvalStatus.PASSED, exec_time=exec_time, peak_memory=peak, integral=integral)


FAST = _passed(1.0, 1024, 10.0)
SLOW = _passed(4.0, 4096, 40.0)
TIMEOUT = EvalOutcome.failure(EvalStatus.TIMEOUT, "over limit")


def _summary(task_id: str, best: Optional[EvalOutcome], fallback: bool = False, reference: bool = True) -> Dict:
    return {
        "task_id": task_id,
        "best_eval": best.to_dict() if best else None,
        "fallback": fallback,
        "stalled": False,
        "iterations_run": 1,
        "iterations_planned": 1,
        "reference": REFERENCE if reference else None,
    }


def _trajectory(run_dir: Path, task_id: str, candidates: List[Candidate], summary: Dict) -> None:
    writer = TrajectoryWriter(run_dir / task_id / TRAJECTORY_FILE)
    for candidate in candidates:
        writer.log_candidate(candidate)
    if len(candidates) > 1:
        writer.log_step(StepRecord(1, Operator.MUTATION, (0,), 1, candidates[1].reward))
    writer.log_summary(summary)


def _make_run(run_dir: Path) -> Path:
    """
    Four tasks: one improved by evolution, one that fell back to its Direct
    baseline, one without any passing program and one without a reference.
    """
    failing = Candidate(0, "x\n", Origin.init(0), eval=TIMEOUT)
    _trajectory(
        run_dir,
        "t-evolved",
        [failing, Candidate(1, "y\n", Origin.mutation(0), iteration=1, eval=FAST, reward=0.1)],
        _summary("t-evolved", FAST),
    )
    _trajectory(run_dir, "t-fallback", [failing], _summary("t-fallback", SLOW, fallback=True))
    _trajectory(run_dir, "t-failed", [failing], _summary("t-failed", None))
    _trajectory(run_dir, "t-noref", [failing], _summary("t-noref", FAST, reference=False))
    RunManifest(
        run_id="run-test",
        backend="mock",
        seed=0,
        prompts_sha256="0" * 64,
        task_order=TASK_ORDER,
        tasks={
            task_id: {"status": STATUS_DONE, "reference": None if task_id == "t-noref" else REFERENCE}
            for task_id in TASK_ORDER
        },
    ).save(run_dir)
    return run_dir


def _make_direct(direct_dir: Path, outcomes: Dict[str, EvalOutcome]) -> Path:
    for task_id, outcome in outcomes.items():
        (direct_dir / task_id).mkdir(parents=True, exist_ok=True)
        (direct_dir / task_id / DIRECT_OUTCOME_FILE).write_text(json.dumps(outcome.to_dict()), encoding="utf-8")
    return direct_dir


def _rows(report: Dict) -> Dict[str, Dict]:
    return {task["task_id"]: task for task in report["tasks"]}


class TestBuildReport:
    def test_scores_against_reference(self, tmp_path: Path) -> None:
        report = build_report(_make_run(tmp_path / "run"))
        rows = _rows(report)

        assert (rows["t-evolved"]["s_T"], rows["t-evolved"]["s_M"], rows["t-evolved"]["s_A"]) == (2.0, 2.0, 2.0)
        assert rows["t-fallback"]["s_A"] == 0.5
        assert rows["t-fallback"]["fallback"]
        assert rows["t-failed"]["failed"] and rows["t-failed"]["s_A"] == 0.0
        assert report["fallback_tasks"] == ["t-fallback"]
        assert report["failed_tasks"] == ["t-failed", "t-noref"]

    def test_failed_tasks_count_as_zero_and_missing_reference_is_excluded(self, tmp_path: Path) -> None:
        report = build_report(_make_run(tmp_path / "run"))

        assert report["missing_reference"] == ["t-noref"]
        assert not _rows(report)["t-noref"]["included"]
        assert report["included_tasks"] == 3
        assert report["aggregate"] == {"ET": 83.33, "MP": 83.33, "MI": 83.33}
        assert not report["gated_by_direct"]
        assert "direct_aggregate" not in report

    def test_direct_gating(self, tmp_path: Path) -> None:
        run_dir = _make_run(tmp_path / "run")
        direct_dir = _make_direct(
            tmp_path / "direct",
            {
                "t-evolved": EvalOutcome.failure(EvalStatus.WRONG_ANSWER),
                "t-fallback": SLOW,
                "t-noref": FAST,
            },
        )
        report = build_report(run_dir, direct_dir)
        rows = _rows(report)

        assert report["gated_by_direct"]
        assert [t for t, row in rows.items() if row["included"]] == ["t-fallback"]
        assert rows["t-evolved"]["direct_passed"] is False
        assert rows["t-failed"]["direct_passed"] is False
        assert report["aggregate"] == {"ET": 50.0, "MP": 50.0, "MI": 50.0}
        # a task that fell back scores exactly like its Direct baseline
        assert report["direct_aggregate"] == report["aggregate"]

    def test_dynamics(self, tmp_path: Path) -> None:
        report = build_report(_make_run(tmp_path / "run"))
        rows = _rows(report)

        assert rows["t-evolved"]["best_so_far"] == [None, 10.0]
        assert rows["t-evolved"]["improvements"] == 1
        assert rows["t-evolved"]["iter_at_best"] == 1
        assert rows["t-failed"]["iter_at_best"] is None
        assert report["dynamics"]["imp"] == pytest.approx(0.25)
        assert report["dynamics"]["iter_at_best"] == pytest.approx(1.0)

    def test_incomplete_trajectory(self, tmp_path: Path) -> None:
        run_dir = _make_run(tmp_path / "run")
        path = run_dir / "t-evolved" / TRAJECTORY_FILE
        lines = path.read_text(encoding="utf-8").splitlines()
        path.write_text("\n".join(lines[:-1]) + "\n", encoding="utf-8")

        row = _rows(build_report(run_dir))["t-evolved"]
        assert row["status"] == "incomplete"
        assert row["failed"]
        assert row["best_so_far"] == []

    def test_missing_manifest(self, tmp_path: Path) -> None:
        with pytest.raises(NotFoundError):
            build_report(tmp_path)


class TestWriteReport:
    def test_outputs(self, tmp_path: Path) -> None:
        run_dir = _make_run(tmp_path / "run")
        paths = write_report(build_report(run_dir), run_dir)
        assert [p.name for p in paths] == ["report.json", "report.csv", "best_so_far.csv"]

        saved = json.loads(paths[0].read_text(encoding="utf-8"))
        assert saved["run_id"] == "run-test"

        with open(paths[1], newline="", encoding="utf-8") as f:
            table = list(csv.reader(f))
        assert table[0][0] == "task_id"
        assert [row[0] for row in table[1:5]] == TASK_ORDER
        assert ["ET", "83.33"] in table
        assert ["imp", "0.25"] in table

        with open(paths[2], newline="", encoding="utf-8") as f:
            series = list(csv.reader(f))
        assert series[0] == ["task_id", "iteration", "best_integral"]
        assert ["t-evolved", "0", "inf"] in series
        assert ["t-evolved", "1", "10.0"] in series
