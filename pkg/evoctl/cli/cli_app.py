"""
CLI application for evoctl

This module parses the command line, builds the services a command needs and
maps the outcome to a process exit code: 0 on success, 2 when some tasks
failed, and the error's own code (1 for configuration and environment
problems) when an EvoctlError escapes.
"""

import argparse
import logging
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

from ..models.task_models import Language, TaskSpec
from ..services.batch_runner import EXIT_OK, MANIFEST_FILE, STORE_DIR, BatchRunner, run_direct
from ..services.evolution_engine import EngineConfig
from ..services.global_store import GlobalStore, build_embedder
from ..services.metrics_service import DEFAULT_CLIP_K
from ..services.mock_generator import synthetic_task
from ..services.report_service import build_report, write_report
from ..services.task_bundles import ingest_tasks, write_task_bundle
from ..services.toolchain import BACKENDS, build_toolchain
from ..util.clock import SystemClock
from ..util.config_manager import ConfigurationManager
from ..util.exceptions import ConfigError, EvoctlError, NotFoundError, StoreCorruptedError, ValidationError
from ..util.logging_service import LoggingService

logger = logging.getLogger(__name__)

EXIT_INTERRUPTED = 130


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="INI configuration file")


def _add_generation(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--tasks", required=True, type=Path, help="Directory of task bundles")
    parser.add_argument("--out", required=True, type=Path, help="Output directory")
    parser.add_argument("--backend", choices=BACKENDS, help="Generator backend (default: [Run] backend)")
    parser.add_argument("--seed", type=int, help="Master seed (default: [Engine] seed)")
    parser.add_argument(
        "--strict",
        action="store_true",
        help="Abort when any task bundle is invalid instead of skipping it",
    )


def build_parser() -> argparse.ArgumentParser:
    """Build the argparse tree for every evoctl subcommand."""
    parser = argparse.ArgumentParser(
        prog="evoctl",
        description="Controlled self-evolution of memory-time efficient programs",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    direct = commands.add_parser("direct", help="Generate single-turn Direct baselines")
    _add_common(direct)
    _add_generation(direct)

    run = commands.add_parser("run", help="Evolve every task and write a run directory")
    _add_common(run)
    _add_generation(run)
    run.add_argument(
        "--direct",
        type=Path,
        help="Direct baseline directory from `evoctl direct` (required; used for fallback)",
    )
    run.add_argument("--resume", action="store_true", help="Continue an interrupted run in --out")
    run.add_argument("--jobs", type=int, help="Tasks evolved concurrently (default: [Run] jobs)")

    report = commands.add_parser("report", help="Score a run (or a directory of runs)")
    _add_common(report)
    report.add_argument("--runs", required=True, type=Path, help="Run directory or a parent of run directories")
    report.add_argument("--direct", type=Path, help="Gate aggregates on tasks the Direct baseline solved")
    report.add_argument("--out", type=Path, help="Report directory (default: the run directory)")

    store = commands.add_parser("store", help="Global experience store maintenance")
    store_commands = store.add_subparsers(dest="store_command", required=True)
    verify = store_commands.add_parser("verify", help="Check entry and vector invariants")
    _add_common(verify)
    verify.add_argument("--store", required=True, type=Path, help="Store directory or run directory")

    synth = commands.add_parser("synth", help="Write synthetic echo task bundles")
    _add_common(synth)
    synth.add_argument("--out", required=True, type=Path, help="Directory to write bundles into")
    synth.add_argument("--count", type=int, default=5, help="Number of tasks (default: 5)")
    synth.add_argument("--seed", type=int, default=0, help="Seed for test inputs (default: 0)")
    synth.add_argument(
        "--language",
        choices=[language.value for language in Language],
        default=Language.PYTHON.value,
    )
    return parser


class CliApp:
    """
    Runs one evoctl command.

    Configuration and logging are set up per invocation; run and direct
    commands also mirror the log into their output directory.
    """

    def __init__(self, args: argparse.Namespace) -> None:
        self.args = args
        self.config_manager = ConfigurationManager(args.config)
        self.logging_service = LoggingService(self.config_manager)
        self._handlers: Dict[str, Callable[[], int]] = {
            "direct": self.cmd_direct,
            "run": self.cmd_run,
            "report": self.cmd_report,
            "store": self.cmd_store,
            "synth": self.cmd_synth,
        }

    def execute(self) -> int:
        try:
            return self._handlers[self.args.command]()
        except EvoctlError as e:
            logger.error(f"{type(e).__name__}: {e.message}", extra=e.to_dict())
            return e.code
        except KeyboardInterrupt:
            logger.warning("Interrupted; rerun with --resume to continue")
            return EXIT_INTERRUPTED
        finally:
            self.logging_service.detach_run_log()

    # --- shared helpers ---

    def _backend(self) -> str:
        backend = self.args.backend or self.config_manager.get("Run", "backend", fallback="llm") or "llm"
        if backend not in BACKENDS:
            raise ConfigError(f"[Run] backend must be one of {BACKENDS}")
        return backend

    def _seed(self) -> int:
        if self.args.seed is not None:
            self.config_manager.set("Engine", "seed", self.args.seed)
        return self.config_manager.getint("Engine", "seed", fallback=0) or 0

    def _clip_k(self) -> float:
        clip_k = self.config_manager.getfloat("Metrics", "clip_k", fallback=DEFAULT_CLIP_K)
        if clip_k is None or clip_k <= 0:
            raise ConfigError("[Metrics] clip_k must be positive")
        return clip_k

    def _tasks(self) -> List[TaskSpec]:
        """
        Raises:
            ValidationError: Under --strict when any bundle is invalid, or
                when no valid task remains
        """
        result = ingest_tasks(self.args.tasks)
        if result.errors:
            for name, message in sorted(result.errors.items()):
                logger.warning(f"Invalid task bundle {name}: {message}")
            if self.args.strict:
                raise ValidationError(
                    f"{len(result.errors)} invalid task bundle(s)",
                    details={"errors": result.errors},
                )
        if not result.tasks:
            raise ValidationError(f"No valid task bundles in {self.args.tasks}")
        return result.tasks

    def _open_out(self) -> Path:
        out = Path(self.args.out)
        out.mkdir(parents=True, exist_ok=True)
        self.logging_service.attach_run_log(str(out))
        return out

    # --- commands ---

    def cmd_direct(self) -> int:
        tasks = self._tasks()
        out = self._open_out()
        toolchain = build_toolchain(self.config_manager, self._backend(), self._seed(), run_dir=out)
        outcome = run_direct(tasks, toolchain, out)
        logger.info(
            f"Direct baselines written: {len(outcome.completed) - len(outcome.failed)} of "
            f"{len(outcome.completed)} passed",
            extra={"out": str(out)},
        )
        return EXIT_OK

    def cmd_run(self) -> int:
        tasks = self._tasks()
        seed = self._seed()
        engine_config = EngineConfig.from_config(self.config_manager)
        clip_k = self._clip_k()
        jobs = self.args.jobs or self.config_manager.getint("Run", "jobs", fallback=1) or 1
        out = self._open_out()

        toolchain = build_toolchain(self.config_manager, self._backend(), seed, run_dir=out)
        runner = BatchRunner(
            self.config_manager,
            toolchain,
            engine_config,
            out,
            resume=self.args.resume,
            jobs=jobs,
            direct_dir=self.args.direct,
            tasks_dir=self.args.tasks,
        )
        outcome = runner.run(tasks)
        write_report(build_report(out, self.args.direct, clip_k), out)
        return outcome.exit_code

    def cmd_report(self) -> int:
        root = Path(self.args.runs)
        run_dirs = self._run_dirs(root)
        clip_k = self._clip_k()
        for run_dir in run_dirs:
            out = self.args.out / run_dir.name if self.args.out and len(run_dirs) > 1 else self.args.out
            report = build_report(run_dir, self.args.direct, clip_k)
            write_report(report, out or run_dir)
            aggregate = report["aggregate"]
            if aggregate:
                logger.info(
                    f"{run_dir.name}: ET={aggregate['ET']:.2f}% MP={aggregate['MP']:.2f}% "
                    f"MI={aggregate['MI']:.2f}% over {report['included_tasks']} tasks",
                )
            else:
                logger.warning(f"{run_dir.name}: no task qualifies for aggregation")
        return EXIT_OK

    @staticmethod
    def _run_dirs(root: Path) -> List[Path]:
        if (root / MANIFEST_FILE).is_file():
            return [root]
        if root.is_dir():
            found = sorted(p for p in root.iterdir() if (p / MANIFEST_FILE).is_file())
            if found:
                return found
        raise NotFoundError(f"No run manifest under {root}")

    def cmd_store(self) -> int:
        directory = Path(self.args.store)
        if (directory / STORE_DIR).is_dir():
            directory = directory / STORE_DIR
        if not directory.is_dir():
            raise NotFoundError(f"Store directory not found: {directory}")
        embedder = build_embedder(self.config_manager)
        try:
            store = GlobalStore(directory, embedder, SystemClock())
        except StoreCorruptedError as e:
            logger.error(f"Store failed to load: {e.message}", extra={"store": str(directory)})
            return e.code
        problems = store.verify()
        for problem in problems:
            logger.error(f"Store check failed: {problem}", extra={"store": str(directory)})
        if problems:
            return 1
        logger.info(f"Store OK: {len(store)} entries", extra={"store": str(directory)})
        return EXIT_OK

    def cmd_synth(self) -> int:
        if self.args.count < 1:
            raise ConfigError("--count must be at least 1")
        language = Language(self.args.language)
        for index in range(self.args.count):
            task = synthetic_task(f"echo-{index:03d}", seed=self.args.seed, language=language)
            write_task_bundle(task, self.args.out)
        logger.info(f"Wrote {self.args.count} synthetic task bundles", extra={"out": str(self.args.out)})
        return EXIT_OK


def run_cli(argv: Optional[Sequence[str]] = None) -> int:
    """Parse ``argv`` and execute the selected command; returns the exit code."""
    args = build_parser().parse_args(argv)
    try:
        app = CliApp(args)
    except EvoctlError as e:
        logging.getLogger(__name__).error(e.message)
        return e.code
    return app.execute()
