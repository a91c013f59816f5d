"""Tests for the evoctl command line and the main entry point."""

import importlib
import json
from pathlib import Path
from unittest.mock import MagicMock, patch

import pytest

from evoctl.cli.cli_app import EXIT_INTERRUPTED, build_parser, run_cli
from evoctl.services.batch_runner import EXIT_ERROR, EXIT_OK, EXIT_PARTIAL, MANIFEST_FILE

CLI_CONFIG = """\
[Engine]
iterations = 6
n_init = 3
seed = 0

[Run]
backend = mock

[Embedding]
backend = hash
dimension = 64

[App]
log_level = WARNING
log_file =
"""


@pytest.fixture
def cli_config(tmp_path: Path) -> str:
    path = tmp_path / "cli.ini"
    path.write_text(CLI_CONFIG, encoding="utf-8")
    return str(path)


@pytest.fixture
def synth_tasks(tmp_path: Path, cli_config: str) -> Path:
    tasks = tmp_path / "tasks"
    assert run_cli(["synth", "--config", cli_config, "--out", str(tasks), "--count", "2"]) == EXIT_OK
    return tasks


@pytest.fixture
def direct_dir(tmp_path: Path, cli_config: str, synth_tasks: Path) -> Path:
    out = tmp_path / "direct"
    argv = ["direct", "--config", cli_config, "--tasks", str(synth_tasks), "--out", str(out)]
    assert run_cli(argv) == EXIT_OK
    return out


class TestCommands:
    def test_synth_writes_bundles(self, synth_tasks: Path) -> None:
        assert sorted(p.name for p in synth_tasks.iterdir()) == ["echo-000", "echo-001"]

    def test_direct_then_run_then_report(self, tmp_path: Path, cli_config: str, synth_tasks: Path) -> None:
        direct = tmp_path / "direct"
        run = tmp_path / "runs" / "run-a"
        common = ["--config", cli_config, "--tasks", str(synth_tasks), "--backend", "mock"]

        assert run_cli(["direct", *common, "--out", str(direct)]) == EXIT_OK
        assert (direct / "direct_manifest.json").is_file()

        code = run_cli(["run", *common, "--out", str(run), "--direct", str(direct)])
        assert code in (EXIT_OK, EXIT_PARTIAL)
        assert (run / MANIFEST_FILE).is_file()
        assert (run / "evoctl.log").is_file()
        report = json.loads((run / "report.json").read_text(encoding="utf-8"))
        assert report["gated_by_direct"]
        assert [task["task_id"] for task in report["tasks"]] == ["echo-000", "echo-001"]

        out = tmp_path / "reports"
        assert run_cli(["report", "--config", cli_config, "--runs", str(tmp_path / "runs"), "--out", str(out)]) == EXIT_OK
        assert (out / "report.csv").is_file()
        assert (out / "best_so_far.csv").is_file()

        assert run_cli(["store", "verify", "--config", cli_config, "--store", str(run)]) == EXIT_OK

    def test_existing_run_needs_resume(
        self, tmp_path: Path, cli_config: str, synth_tasks: Path, direct_dir: Path
    ) -> None:
        argv = ["run", "--config", cli_config, "--tasks", str(synth_tasks), "--out", str(tmp_path / "run")]
        argv += ["--direct", str(direct_dir)]
        assert run_cli(argv) in (EXIT_OK, EXIT_PARTIAL)
        assert run_cli(argv) == EXIT_ERROR
        assert run_cli([*argv, "--resume"]) in (EXIT_OK, EXIT_PARTIAL)

    def test_run_without_direct_baselines(self, tmp_path: Path, cli_config: str, synth_tasks: Path) -> None:
        run = tmp_path / "run"
        argv = ["run", "--config", cli_config, "--tasks", str(synth_tasks), "--out", str(run)]
        assert run_cli(argv) == EXIT_ERROR
        assert run_cli([*argv, "--direct", str(tmp_path / "no-direct")]) == EXIT_ERROR
        assert not (run / MANIFEST_FILE).exists()

    def test_strict_rejects_invalid_bundle(self, tmp_path: Path, cli_config: str, synth_tasks: Path) -> None:
        (synth_tasks / "broken").mkdir()
        argv = ["direct", "--config", cli_config, "--tasks", str(synth_tasks), "--out", str(tmp_path / "d")]
        assert run_cli([*argv, "--strict"]) == EXIT_ERROR
        assert run_cli(argv) == EXIT_OK

    def test_report_without_runs(self, tmp_path: Path, cli_config: str) -> None:
        assert run_cli(["report", "--config", cli_config, "--runs", str(tmp_path / "nothing")]) == EXIT_ERROR

    def test_store_verify_detects_damage(self, tmp_path: Path, cli_config: str) -> None:
        store = tmp_path / "store"
        store.mkdir()
        (store / "store.jsonl").write_text('{"experience_id": "g000000"}\n', encoding="utf-8")
        (store / "store.vec").write_bytes(b"\x00" * 3)
        assert run_cli(["store", "verify", "--config", cli_config, "--store", str(store)]) == EXIT_ERROR

    def test_missing_config_file(self, tmp_path: Path) -> None:
        assert run_cli(["synth", "--config", str(tmp_path / "absent.ini"), "--out", str(tmp_path)]) == EXIT_ERROR

    def test_interrupt_exit_code(self, tmp_path: Path, cli_config: str, synth_tasks: Path) -> None:
        argv = ["run", "--config", cli_config, "--tasks", str(synth_tasks), "--out", str(tmp_path / "run")]
        with patch("evoctl.cli.cli_app.BatchRunner") as mock_runner:
            mock_runner.return_value.run.side_effect = KeyboardInterrupt()
            assert run_cli(argv) == EXIT_INTERRUPTED

    def test_subcommand_required(self) -> None:
        with pytest.raises(SystemExit):
            build_parser().parse_args([])


class TestMainModule:
    @patch("evoctl.main.run_cli")
    def test_main_returns_cli_exit_code(self, mock_run_cli: MagicMock) -> None:
        main_func = importlib.import_module("evoctl.main").main
        mock_run_cli.return_value = EXIT_PARTIAL

        assert main_func(["report", "--runs", "x"]) == EXIT_PARTIAL
        mock_run_cli.assert_called_once_with(["report", "--runs", "x"])
