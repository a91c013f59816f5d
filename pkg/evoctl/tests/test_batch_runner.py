"""
Tests for BatchRunner and the Direct baseline pipeline

All runs use the offline mock backend with a frozen clock.
"""

import json
from pathlib import Path
from typing import List
from unittest.mock import MagicMock

import pytest

from evoctl.models.task_models import TaskSpec
from evoctl.services.batch_runner import (
    MANIFEST_FILE,
    STATUS_DONE,
    STATUS_ERROR,
    TRAJECTORY_FILE,
    BatchRunner,
    RunManifest,
    load_direct_baselines,
    run_direct,
)
from evoctl.services.evolution_engine import EngineConfig
from evoctl.services.toolchain import Toolchain, build_toolchain
from evoctl.services.trajectory_log import read_trajectory
from evoctl.util.config_manager import ConfigurationManager
from evoctl.util.exceptions import ConfigError

from .conftest import make_tasks

ITERATIONS = 8


def _toolchain(config_manager: ConfigurationManager, run_dir: Path) -> Toolchain:
    run_dir.mkdir(parents=True, exist_ok=True)
    return build_toolchain(config_manager, "mock", seed=0, run_dir=run_dir)


def _runner(config_manager: ConfigurationManager, run_dir: Path, direct_dir: Path, **kwargs) -> BatchRunner:
    return BatchRunner(
        config_manager,
        _toolchain(config_manager, run_dir),
        EngineConfig(iterations=ITERATIONS),
        run_dir,
        direct_dir=direct_dir,
        **kwargs,
    )


@pytest.fixture
def tasks() -> List[TaskSpec]:
    return make_tasks(3)


@pytest.fixture
def baselines(config_manager: ConfigurationManager, tasks: List[TaskSpec], tmp_path: Path) -> Path:
    direct_dir = tmp_path / "direct"
    run_direct(tasks, _toolchain(config_manager, direct_dir), direct_dir)
    return direct_dir


class TestBatchRunner:
    def test_run_writes_artifacts_in_task_order(
        self,
        config_manager: ConfigurationManager,
        tasks: List[TaskSpec],
        baselines: Path,
        tmp_path: Path,
    ) -> None:
        run_dir = tmp_path / "run"
        outcome = _runner(config_manager, run_dir, baselines).run(tasks)

        assert outcome.completed == [t.task_id for t in tasks]
        manifest = RunManifest.load(run_dir)
        assert manifest.task_order == ["echo-000", "echo-001", "echo-002"]
        assert manifest.backend == "mock"
        assert manifest.finished_at is not None
        for task in tasks:
            entry = manifest.tasks[task.task_id]
            assert entry["status"] == STATUS_DONE
            trajectory = read_trajectory(run_dir / task.task_id / TRAJECTORY_FILE, task.task_id)
            assert trajectory.complete
            assert 0 < len(trajectory.steps) <= ITERATIONS
            if entry["best_passed"]:
                assert (run_dir / entry["artifacts"]["best"]).is_file()
        entries = (run_dir / "store" / "store.jsonl").read_text(encoding="utf-8").splitlines()
        assert [json.loads(line)["task_id"] for line in entries] == ["echo-000", "echo-001", "echo-002"]
        assert (run_dir / "generator_calls.jsonl").is_file()

    def test_later_tasks_retrieve_earlier_experience(
        self,
        config_manager: ConfigurationManager,
        tasks: List[TaskSpec],
        baselines: Path,
        tmp_path: Path,
    ) -> None:
        run_dir = tmp_path / "run"
        _runner(config_manager, run_dir, baselines).run(tasks)
        first = read_trajectory(run_dir / "echo-000" / TRAJECTORY_FILE)
        last = read_trajectory(run_dir / "echo-002" / TRAJECTORY_FILE)
        assert all(step.retrieved_ids == [] for step in first.steps)
        retrieved = {rid for step in last.steps for rid in step.retrieved_ids}
        assert retrieved and retrieved <= {"g000000", "g000001"}

    def test_existing_run_needs_resume(
        self,
        config_manager: ConfigurationManager,
        tasks: List[TaskSpec],
        baselines: Path,
        tmp_path: Path,
    ) -> None:
        run_dir = tmp_path / "run"
        _runner(config_manager, run_dir, baselines).run(tasks)
        with pytest.raises(ConfigError):
            _runner(config_manager, run_dir, baselines).run(tasks)

    def test_resume_of_finished_run_makes_no_generator_calls(
        self,
        config_manager: ConfigurationManager,
        tasks: List[TaskSpec],
        baselines: Path,
        tmp_path: Path,
    ) -> None:
        run_dir = tmp_path / "run"
        first = _runner(config_manager, run_dir, baselines).run(tasks)

        runner = _runner(config_manager, run_dir, baselines, resume=True)
        runner.toolchain.generator.backend = MagicMock()
        outcome = runner.run(tasks)

        runner.toolchain.generator.backend.complete.assert_not_called()
        assert outcome.skipped == [t.task_id for t in tasks]
        assert outcome.completed == []
        assert outcome.exit_code == first.exit_code

    def test_resume_reruns_errored_task_only(
        self,
        config_manager: ConfigurationManager,
        tasks: List[TaskSpec],
        baselines: Path,
        tmp_path: Path,
    ) -> None:
        run_dir = tmp_path / "run"
        _runner(config_manager, run_dir, baselines).run(tasks)
        manifest = json.loads((run_dir / MANIFEST_FILE).read_text(encoding="utf-8"))
        manifest["tasks"]["echo-001"]["status"] = STATUS_ERROR
        (run_dir / MANIFEST_FILE).write_text(json.dumps(manifest), encoding="utf-8")
        store_lines = (run_dir / "store" / "store.jsonl").read_text(encoding="utf-8")

        outcome = _runner(config_manager, run_dir, baselines, resume=True).run(tasks)

        assert outcome.completed == ["echo-001"]
        assert outcome.skipped == ["echo-000", "echo-002"]
        assert RunManifest.load(run_dir).tasks["echo-001"]["status"] == STATUS_DONE
        # the stored experience of echo-001 is reused rather than distilled twice
        assert (run_dir / "store" / "store.jsonl").read_text(encoding="utf-8") == store_lines

    def test_resume_with_different_task_set(
        self,
        config_manager: ConfigurationManager,
        tasks: List[TaskSpec],
        baselines: Path,
        tmp_path: Path,
    ) -> None:
        run_dir = tmp_path / "run"
        _runner(config_manager, run_dir, baselines).run(tasks)
        with pytest.raises(ConfigError):
            _runner(config_manager, run_dir, baselines, resume=True).run(tasks[:2])

    def test_repeated_runs_are_byte_identical(
        self,
        config_manager: ConfigurationManager,
        tasks: List[TaskSpec],
        baselines: Path,
        tmp_path: Path,
    ) -> None:
        for name in ("a", "b"):
            _runner(config_manager, tmp_path / name, baselines).run(tasks)
        for task in tasks:
            relative = Path(task.task_id) / TRAJECTORY_FILE
            assert (tmp_path / "a" / relative).read_bytes() == (tmp_path / "b" / relative).read_bytes()
        for name in ("store/store.jsonl", "store/store.vec"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        assert RunManifest.load(tmp_path / "a").run_id == RunManifest.load(tmp_path / "b").run_id

    def test_concurrent_jobs_complete_every_task(
        self,
        config_manager: ConfigurationManager,
        tasks: List[TaskSpec],
        baselines: Path,
        tmp_path: Path,
    ) -> None:
        run_dir = tmp_path / "run"
        outcome = _runner(config_manager, run_dir, baselines, jobs=3).run(tasks)
        assert outcome.completed == [t.task_id for t in tasks]
        entries = (run_dir / "store" / "store.jsonl").read_text(encoding="utf-8").splitlines()
        assert [json.loads(line)["task_id"] for line in entries] == ["echo-000", "echo-001", "echo-002"]

    def test_jobs_must_be_positive(self, config_manager: ConfigurationManager, tmp_path: Path) -> None:
        with pytest.raises(ConfigError):
            _runner(config_manager, tmp_path / "run", tmp_path / "direct", jobs=0)


class TestDirectBaselines:
    def test_run_direct_and_load(
        self, config_manager: ConfigurationManager, tasks: List[TaskSpec], tmp_path: Path
    ) -> None:
        direct_dir = tmp_path / "direct"
        outcome = run_direct(tasks, _toolchain(config_manager, direct_dir), direct_dir)
        assert outcome.completed == [t.task_id for t in tasks]

        baselines = load_direct_baselines(direct_dir, [t.task_id for t in tasks])
        assert sorted(baselines) == ["echo-000", "echo-001", "echo-002"]
        for task_id, baseline in baselines.items():
            assert baseline.code.startswith("# evoctl synthetic candidate")
            assert baseline.eval is not None
            assert (task_id in outcome.failed) == (not baseline.passed)

    def test_missing_baseline_is_config_error(
        self, config_manager: ConfigurationManager, tasks: List[TaskSpec], tmp_path: Path
    ) -> None:
        direct_dir = tmp_path / "direct"
        run_direct(tasks[:2], _toolchain(config_manager, direct_dir), direct_dir)
        with pytest.raises(ConfigError) as exc:
            load_direct_baselines(direct_dir, [t.task_id for t in tasks])
        assert exc.value.details["missing"] == ["echo-002"]

    def test_run_with_direct_dir_records_it(
        self, config_manager: ConfigurationManager, tasks: List[TaskSpec], tmp_path: Path
    ) -> None:
        direct_dir = tmp_path / "direct"
        run_direct(tasks, _toolchain(config_manager, direct_dir), direct_dir)
        run_dir = tmp_path / "run"
        _runner(config_manager, run_dir, direct_dir).run(tasks)
        assert RunManifest.load(run_dir).direct_dir == str(direct_dir)

    def test_run_without_baselines_is_refused(
        self, config_manager: ConfigurationManager, tasks: List[TaskSpec], tmp_path: Path
    ) -> None:
        run_dir = tmp_path / "run"
        runner = BatchRunner(config_manager, _toolchain(config_manager, run_dir), EngineConfig(iterations=2), run_dir)
        with pytest.raises(ConfigError):
            runner.run(tasks)
        assert not (run_dir / MANIFEST_FILE).exists()

    def test_run_with_incomplete_baselines_is_refused(
        self, config_manager: ConfigurationManager, tasks: List[TaskSpec], tmp_path: Path
    ) -> None:
        direct_dir = tmp_path / "direct"
        run_direct(tasks[:1], _toolchain(config_manager, direct_dir), direct_dir)
        run_dir = tmp_path / "run"
        with pytest.raises(ConfigError) as exc:
            _runner(config_manager, run_dir, direct_dir).run(tasks)
        assert exc.value.details["missing"] == ["echo-001", "echo-002"]
        assert not (run_dir / MANIFEST_FILE).exists()
