"""
BatchRunner for evoctl

Runs the evolution engine over a fixed, recorded task order, persists every
artifact under one run directory and supports resuming an interrupted run.
Also produces and loads the Direct baselines used for fallback and gating.
"""

import hashlib
import json
import logging
import shutil
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import partial
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

from ..models.candidate_models import DirectBaseline
from ..models.eval_models import EvalOutcome, EvalStatus
from ..models.task_models import TaskSpec
from ..util.exceptions import (
    ConfigError,
    EvoctlError,
    GenerationExhausted,
    NotFoundError,
    SandboxUnavailable,
    TransportError,
    ValidationError,
)
from .evolution_engine import EngineConfig, EvolutionEngine, TaskResult
from .global_store import ENTRIES_FILE, VECTORS_FILE, GlobalStore
from .toolchain import CALLS_FILE, LLM_LOG_FILE, Toolchain
from .trajectory_log import TrajectoryWriter, read_trajectory

logger = logging.getLogger(__name__)

MANIFEST_FILE = "manifest.json"
STORE_DIR = "store"
RUN_LOG_FILE = "evoctl.log"
TRAJECTORY_FILE = "trajectory.jsonl"
DIAGNOSIS_FILE = "diagnosis.json"
REPORT_FILES = ("report.json", "report.csv", "best_so_far.csv")
DIRECT_MANIFEST_FILE = "direct_manifest.json"
DIRECT_OUTCOME_FILE = "outcome.json"

STATUS_PENDING = "pending"
STATUS_DONE = "done"
STATUS_ERROR = "error"

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_PARTIAL = 2


def _write_json(path: Path, payload: Any) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps(payload, indent=2, ensure_ascii=False, allow_nan=False) + "\n",
        encoding="utf-8",
    )


def _read_json(path: Path) -> Any:
    if not path.is_file():
        raise NotFoundError(f"File not found: {path}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ValidationError(f"Malformed JSON in {path}: {e}") from e


@dataclass
class RunManifest:
    """
    Everything needed to reproduce or resume a run. The task order is fixed
    before the first task starts.
    """

    run_id: str
    backend: str
    seed: int
    prompts_sha256: str
    task_order: List[str]
    config: Dict[str, Dict[str, str]] = field(default_factory=dict)
    tasks_dir: str = ""
    direct_dir: Optional[str] = None
    created_at: str = ""
    finished_at: Optional[str] = None
    store_base_count: int = 0
    tasks: Dict[str, Dict[str, Any]] = field(default_factory=dict)
    artifacts: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {"schema": 1, **asdict(self)}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunManifest":
        try:
            return cls(
                run_id=data["run_id"],
                backend=data["backend"],
                seed=int(data["seed"]),
                prompts_sha256=data["prompts_sha256"],
                task_order=list(data["task_order"]),
                config=data.get("config", {}),
                tasks_dir=data.get("tasks_dir", ""),
                direct_dir=data.get("direct_dir"),
                created_at=data.get("created_at", ""),
                finished_at=data.get("finished_at"),
                store_base_count=int(data.get("store_base_count", 0)),
                tasks=data.get("tasks", {}),
                artifacts=list(data.get("artifacts", [])),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ValidationError(f"Malformed run manifest: {e}") from e

    def save(self, run_dir: Path) -> None:
        _write_json(Path(run_dir) / MANIFEST_FILE, self.to_dict())

    @classmethod
    def load(cls, run_dir: Path) -> "RunManifest":
        """
        Raises:
            NotFoundError: If the directory holds no manifest
        """
        return cls.from_dict(_read_json(Path(run_dir) / MANIFEST_FILE))


def make_run_id(task_order: Sequence[str], seed: int, backend: str, prompts_sha256: str) -> str:
    digest = hashlib.sha256(
        json.dumps([list(task_order), seed, backend, prompts_sha256]).encode("utf-8")
    ).hexdigest()
    return f"run-{digest[:12]}"


@dataclass
class BatchOutcome:
    run_dir: Path
    completed: List[str] = field(default_factory=list)
    skipped: List[str] = field(default_factory=list)
    failed: List[str] = field(default_factory=list)

    @property
    def exit_code(self) -> int:
        return EXIT_PARTIAL if self.failed else EXIT_OK


def load_direct_baselines(direct_dir: Path, task_ids: Sequence[str]) -> Dict[str, DirectBaseline]:
    """
    Load ``<direct_dir>/<task_id>/outcome.json`` and the solution file for
    every task.

    Raises:
        ConfigError: If a task has no Direct baseline
    """
    direct_dir = Path(direct_dir)
    manifest = _read_json(direct_dir / DIRECT_MANIFEST_FILE) if (direct_dir / DIRECT_MANIFEST_FILE).is_file() else {}
    entries = manifest.get("tasks", {})
    baselines: Dict[str, DirectBaseline] = {}
    missing: List[str] = []
    for task_id in task_ids:
        outcome_path = direct_dir / task_id / DIRECT_OUTCOME_FILE
        if not outcome_path.is_file():
            missing.append(task_id)
            continue
        code_name = entries.get(task_id, {}).get("code")
        code_path = direct_dir / code_name if code_name else None
        if code_path is None or not code_path.is_file():
            candidates = sorted((direct_dir / task_id).glob("direct.*"))
            code_path = candidates[0] if candidates else None
        baselines[task_id] = DirectBaseline(
            task_id=task_id,
            code=code_path.read_text(encoding="utf-8") if code_path else "",
            eval=EvalOutcome.from_dict(_read_json(outcome_path)),
        )
    if missing:
        raise ConfigError(
            f"Missing Direct baselines for {len(missing)} task(s): {', '.join(missing)}",
            details={"direct_dir": str(direct_dir), "missing": missing},
        )
    return baselines


def run_direct(tasks: Sequence[TaskSpec], toolchain: Toolchain, out_dir: Path) -> BatchOutcome:
    """
    Generate and measure one single-turn solution per task.

    Writes ``<task_id>/direct.<ext>``, ``<task_id>/outcome.json`` and
    ``direct_manifest.json``.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    outcome = BatchOutcome(run_dir=out_dir)
    entries: Dict[str, Dict[str, Any]] = {}

    for task in tasks:
        try:
            code = toolchain.generator.direct(task)
        except (GenerationExhausted, TransportError) as e:
            logger.warning(f"Direct generation failed: {e.message}", extra={"task_id": task.task_id})
            code = ""
        result = (
            toolchain.evaluator.measure(code, task)
            if code
            else EvalOutcome.failure(EvalStatus.COMPILE_ERROR, "no code generated")
        )
        code_name = f"{task.task_id}/direct.{task.language.extension}"
        (out_dir / task.task_id).mkdir(parents=True, exist_ok=True)
        (out_dir / code_name).write_text(code, encoding="utf-8")
        _write_json(out_dir / task.task_id / DIRECT_OUTCOME_FILE, result.to_dict())
        entries[task.task_id] = {
            "status": result.status.value,
            "code": code_name,
            "outcome": f"{task.task_id}/{DIRECT_OUTCOME_FILE}",
        }
        outcome.completed.append(task.task_id)
        if not result.passed:
            outcome.failed.append(task.task_id)
        logger.info(
            f"Direct baseline {result.status.value}",
            extra={"task_id": task.task_id, "status": result.status.value},
        )

    _write_json(
        out_dir / DIRECT_MANIFEST_FILE,
        {
            "schema": 1,
            "backend": toolchain.backend_name,
            "prompts_sha256": toolchain.prompts.content_hash(),
            "created_at": toolchain.clock.now_iso(),
            "task_order": [task.task_id for task in tasks],
            "tasks": entries,
        },
    )
    return outcome


class BatchRunner:
    """
    Runs every task through the engine in manifest order.

    Tasks may evolve concurrently with ``jobs > 1``; distillation into the
    global store always happens one task at a time in manifest order.
    """

    def __init__(
        self,
        config_manager: Any,
        toolchain: Toolchain,
        engine_config: EngineConfig,
        run_dir: Path,
        resume: bool = False,
        jobs: int = 1,
        direct_dir: Optional[Path] = None,
        tasks_dir: Optional[Path] = None,
    ) -> None:
        if jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        self.config_manager = config_manager
        self.toolchain = toolchain
        self.engine_config = engine_config
        self.run_dir = Path(run_dir)
        self.resume = resume
        self.jobs = jobs
        self.direct_dir = Path(direct_dir) if direct_dir else None
        self.tasks_dir = Path(tasks_dir) if tasks_dir else None
        self.store: Optional[GlobalStore] = None
        self.manifest: Optional[RunManifest] = None

    def _open_store(self, fresh: bool) -> GlobalStore:
        store_dir = self.run_dir / STORE_DIR
        preload_dir = self.config_manager.get("Memory", "store_dir", fallback="") or ""
        preload = self.config_manager.getboolean("Memory", "preload_store", fallback=False)
        if fresh and preload and preload_dir:
            source = Path(preload_dir)
            if not (source / VECTORS_FILE).is_file():
                raise ConfigError(f"No global store to preload in {source}")
            store_dir.mkdir(parents=True, exist_ok=True)
            for name in (ENTRIES_FILE, VECTORS_FILE):
                if (source / name).is_file():
                    shutil.copyfile(source / name, store_dir / name)
            logger.info(f"Preloaded global store from {source}")
        return GlobalStore(store_dir, self.toolchain.embedder, self.toolchain.clock)

    def _prepare(self, tasks: Sequence[TaskSpec]) -> RunManifest:
        order = [task.task_id for task in tasks]
        manifest_path = self.run_dir / MANIFEST_FILE
        prompts_hash = self.toolchain.prompts.content_hash()

        if manifest_path.exists():
            if not self.resume:
                raise ConfigError(
                    f"Run directory {self.run_dir} already holds a run; pass --resume to continue it",
                )
            manifest = RunManifest.load(self.run_dir)
            if manifest.task_order != order:
                raise ConfigError(
                    "Task set differs from the recorded task order; refusing to resume",
                    details={"recorded": manifest.task_order, "given": order},
                )
            if manifest.prompts_sha256 != prompts_hash:
                logger.warning("Prompt files changed since the run started")
            self.store = self._open_store(fresh=False)
            logger.info(f"Resuming run {manifest.run_id}", extra={"run_dir": str(self.run_dir)})
            return manifest

        self.run_dir.mkdir(parents=True, exist_ok=True)
        self.store = self._open_store(fresh=True)
        manifest = RunManifest(
            run_id=make_run_id(order, self.engine_config.seed, self.toolchain.backend_name, prompts_hash),
            backend=self.toolchain.backend_name,
            seed=self.engine_config.seed,
            prompts_sha256=prompts_hash,
            task_order=order,
            config=self.config_manager.snapshot(),
            tasks_dir=str(self.tasks_dir) if self.tasks_dir else "",
            direct_dir=str(self.direct_dir) if self.direct_dir else None,
            created_at=self.toolchain.clock.now_iso(),
            store_base_count=len(self.store),
            tasks={
                task.task_id: {
                    "status": STATUS_PENDING,
                    "reference": task.reference.to_dict() if task.reference else None,
                    "artifacts": {},
                }
                for task in tasks
            },
            artifacts=[
                f"{STORE_DIR}/{ENTRIES_FILE}",
                f"{STORE_DIR}/{VECTORS_FILE}",
                CALLS_FILE,
                LLM_LOG_FILE,
                RUN_LOG_FILE,
                *REPORT_FILES,
            ],
        )
        manifest.save(self.run_dir)
        logger.info(
            f"Starting run {manifest.run_id} over {len(order)} tasks",
            extra={"run_dir": str(self.run_dir), "backend": manifest.backend},
        )
        return manifest

    def _is_complete(self, task_id: str) -> bool:
        assert self.manifest is not None
        if self.manifest.tasks.get(task_id, {}).get("status") != STATUS_DONE:
            return False
        path = self.run_dir / task_id / TRAJECTORY_FILE
        try:
            return read_trajectory(path, task_id).complete
        except EvoctlError:
            return False

    def _write_artifacts(self, result: TaskResult) -> Dict[str, Optional[str]]:
        task = result.task
        task_dir = self.run_dir / task.task_id
        artifacts: Dict[str, Optional[str]] = {
            "trajectory": f"{task.task_id}/{TRAJECTORY_FILE}",
            "best": None,
            "diagnosis": f"{task.task_id}/{DIAGNOSIS_FILE}",
        }
        best = result.best
        if best is not None:
            best_name = f"best.{task.language.extension}"
            (task_dir / best_name).write_text(best.code, encoding="utf-8")
            artifacts["best"] = f"{task.task_id}/{best_name}"
        _write_json(
            task_dir / DIAGNOSIS_FILE,
            best.diagnosis.to_dict() if best is not None and best.diagnosis is not None else None,
        )
        return artifacts

    def _record(self, task_id: str, **fields: Any) -> None:
        assert self.manifest is not None
        self.manifest.tasks.setdefault(task_id, {}).update(fields)
        self.manifest.save(self.run_dir)

    def _finish(self, engine: EvolutionEngine, result: TaskResult, writer: TrajectoryWriter) -> None:
        assert self.store is not None and self.manifest is not None
        task_id = result.task.task_id
        existing = self.store.find(task_id, self.manifest.store_base_count)
        engine.finish(result, writer, experience=existing)
        self._record(
            task_id,
            status=STATUS_DONE,
            fallback=result.fallback,
            stalled=result.stalled,
            best_candidate_id=result.best.candidate_id if result.best else None,
            best_passed=result.best is not None and result.best.passed,
            experience_id=result.experience.experience_id if result.experience else None,
            artifacts=self._write_artifacts(result),
        )

    def _fail(self, task_id: str, error: Exception) -> None:
        message = error.message if isinstance(error, EvoctlError) else f"{type(error).__name__}: {error}"
        logger.error(f"Task failed: {message}", extra={"task_id": task_id})
        self._record(
            task_id,
            status=STATUS_ERROR,
            error=message,
            artifacts={"trajectory": f"{task_id}/{TRAJECTORY_FILE}"},
        )

    def _settle(
        self,
        engine: EvolutionEngine,
        task: TaskSpec,
        writer: TrajectoryWriter,
        outcome: BatchOutcome,
        evolve: Callable[[], TaskResult],
    ) -> None:
        """Obtain one task's evolution result, then distill and record it."""
        try:
            result = evolve()
            self._finish(engine, result, writer)
        except (ConfigError, SandboxUnavailable):
            raise
        except Exception as e:
            self._fail(task.task_id, e)
            outcome.failed.append(task.task_id)
            return
        outcome.completed.append(task.task_id)
        if result.best is None or not result.best.passed:
            outcome.failed.append(task.task_id)

    def run(self, tasks: Sequence[TaskSpec]) -> BatchOutcome:
        """
        Process the tasks in order; completed tasks of a resumed run are
        skipped without any generator call.

        Raises:
            ConfigError: On an unusable run directory or missing baselines
            SandboxUnavailable: If candidates cannot be measured at all
        """
        if self.direct_dir is None:
            raise ConfigError("Direct baselines are required; produce them with `evoctl direct` and pass --direct")
        directs = load_direct_baselines(self.direct_dir, [task.task_id for task in tasks])
        self.manifest = self._prepare(tasks)
        manifest = self.manifest
        outcome = BatchOutcome(run_dir=self.run_dir)

        engine = EvolutionEngine(
            self.toolchain.generator,
            self.toolchain.evaluator,
            self.engine_config,
            store=self.store,
            clock=self.toolchain.clock,
        )
        pending: List[TaskSpec] = []
        for task in tasks:
            if self._is_complete(task.task_id):
                outcome.skipped.append(task.task_id)
                logger.info("Task already complete, skipping", extra={"task_id": task.task_id})
            else:
                pending.append(task)

        writers = {
            task.task_id: TrajectoryWriter(self.run_dir / task.task_id / TRAJECTORY_FILE)
            for task in pending
        }

        if self.jobs == 1:
            for task in pending:
                evolve = partial(engine.evolve, task, writers[task.task_id], directs.get(task.task_id))
                self._settle(engine, task, writers[task.task_id], outcome, evolve)
        else:
            with ThreadPoolExecutor(max_workers=self.jobs) as executor:
                futures: Dict[str, Future] = {
                    task.task_id: executor.submit(
                        engine.evolve, task, writers[task.task_id], directs.get(task.task_id)
                    )
                    for task in pending
                }
                for task in pending:
                    self._settle(
                        engine, task, writers[task.task_id], outcome, futures[task.task_id].result
                    )

        for task_id in outcome.skipped:
            if not manifest.tasks.get(task_id, {}).get("best_passed", False):
                outcome.failed.append(task_id)
        manifest.finished_at = self.toolchain.clock.now_iso()
        manifest.save(self.run_dir)
        logger.info(
            f"Run finished: {len(outcome.completed)} completed, {len(outcome.skipped)} skipped, "
            f"{len(outcome.failed)} failed",
            extra={"run_dir": str(self.run_dir)},
        )
        return outcome
