"""
ReportService for evoctl

Turns a run directory into per-task score rows, aggregate ET/MP/MI
percentages, evolution-dynamics statistics and best-so-far series. The
report depends only on the files in the run directory (and the Direct
directory when gating).
"""

import csv
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional

from ..models.eval_models import EvalOutcome
from ..models.population import Population
from ..models.task_models import ReferenceStats
from ..util.exceptions import EvoctlError, MissingReference, NotFoundError
from .batch_runner import (
    DIRECT_OUTCOME_FILE,
    REPORT_FILES,
    STATUS_DONE,
    TRAJECTORY_FILE,
    RunManifest,
)
from .evolution_engine import dynamics_stats, task_dynamics
from .metrics_service import DEFAULT_CLIP_K, ScoreRow, aggregate, score_task
from .trajectory_log import read_trajectory

logger = logging.getLogger(__name__)

ROW_FIELDS = (
    "task_id",
    "status",
    "failed",
    "fallback",
    "stalled",
    "included",
    "s_T",
    "s_M",
    "s_A",
    "improvements",
    "iter_at_best",
    "last10_improvements",
)


@dataclass
class TaskReport:
    task_id: str
    status: str
    row: ScoreRow
    included: bool = False
    stalled: bool = False
    missing_reference: bool = False
    direct_passed: Optional[bool] = None
    direct_row: Optional[ScoreRow] = None
    best_so_far: List[float] = field(default_factory=list)
    improvements: Optional[int] = None
    iter_at_best: Optional[int] = None
    last10_improvements: Optional[int] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "task_id": self.task_id,
            "status": self.status,
            "failed": self.row.failed,
            "fallback": self.row.fallback,
            "stalled": self.stalled,
            "included": self.included,
            "missing_reference": self.missing_reference,
            "direct_passed": self.direct_passed,
            "s_T": self.row.s_T,
            "s_M": self.row.s_M,
            "s_A": self.row.s_A,
            "improvements": self.improvements,
            "iter_at_best": self.iter_at_best,
            "last10_improvements": self.last10_improvements,
            "best_so_far": [None if math.isinf(v) else v for v in self.best_so_far],
        }


def _percentages(rows: List[ScoreRow]) -> Optional[Dict[str, float]]:
    if not rows:
        return None
    return {key: round(value, 2) for key, value in aggregate(rows).items()}


def _reference(task_id: str, payload: Optional[Dict[str, Any]]) -> ReferenceStats:
    if not payload:
        raise MissingReference(task_id)
    return ReferenceStats.from_dict(payload)


def _direct_outcomes(direct_dir: Path, task_ids: List[str]) -> Dict[str, EvalOutcome]:
    outcomes: Dict[str, EvalOutcome] = {}
    for task_id in task_ids:
        path = Path(direct_dir) / task_id / DIRECT_OUTCOME_FILE
        if path.is_file():
            outcomes[task_id] = EvalOutcome.from_dict(json.loads(path.read_text(encoding="utf-8")))
        else:
            logger.warning("No Direct outcome for task; excluded by gating", extra={"task_id": task_id})
    return outcomes


def build_report(
    run_dir: Path,
    direct_dir: Optional[Path] = None,
    clip_k: float = DEFAULT_CLIP_K,
) -> Dict[str, Any]:
    """
    Score every task of a run.

    Aggregates cover tasks with reference statistics; with ``direct_dir``
    they are further restricted to tasks the Direct baseline solved.

    Raises:
        NotFoundError: If the run directory has no manifest
    """
    run_dir = Path(run_dir)
    manifest = RunManifest.load(run_dir)
    if not manifest.task_order:
        raise NotFoundError(f"Run in {run_dir} has no tasks")
    directs = _direct_outcomes(direct_dir, manifest.task_order) if direct_dir else None

    tasks: List[TaskReport] = []
    populations: List[Population] = []
    iterations: Optional[int] = None
    for task_id in manifest.task_order:
        entry = manifest.tasks.get(task_id, {})
        status = entry.get("status", "pending")
        summary: Optional[Dict[str, Any]] = None
        pop: Optional[Population] = None
        try:
            trajectory = read_trajectory(run_dir / task_id / TRAJECTORY_FILE, task_id)
            summary = trajectory.summary
            if trajectory.complete:
                pop = trajectory.to_population()
        except EvoctlError as e:
            logger.warning(f"Trajectory unreadable: {e.message}", extra={"task_id": task_id})
        if status == STATUS_DONE and summary is None:
            status = "incomplete"

        report = TaskReport(task_id=task_id, status=status, row=ScoreRow.failed_row(task_id))
        try:
            reference = _reference(task_id, (summary or {}).get("reference") or entry.get("reference"))
        except MissingReference as e:
            logger.warning(e.message, extra={"task_id": task_id})
            reference = None
            report.missing_reference = True

        if summary is not None:
            report.stalled = bool(summary.get("stalled"))
            fallback = bool(summary.get("fallback"))
            best_eval = summary.get("best_eval")
            if reference is not None and best_eval:
                report.row = score_task(task_id, reference, EvalOutcome.from_dict(best_eval), clip_k)
            report.row = replace(report.row, fallback=fallback)
            iterations = summary.get("iterations_planned", iterations)

        if pop is not None:
            dynamics = task_dynamics(pop, (summary or {}).get("iterations_planned"))
            report.best_so_far = pop.best_so_far_series()
            report.improvements = dynamics.improvements
            report.iter_at_best = dynamics.iter_at_best
            report.last10_improvements = dynamics.last_window_improvements
            populations.append(pop)

        if directs is not None:
            direct = directs.get(task_id)
            report.direct_passed = direct is not None and direct.passed
            if reference is not None and direct is not None:
                report.direct_row = score_task(task_id, reference, direct, clip_k)
        report.included = reference is not None and report.direct_passed is not False
        tasks.append(report)

    included = [t for t in tasks if t.included]
    result: Dict[str, Any] = {
        "schema": 1,
        "run_id": manifest.run_id,
        "backend": manifest.backend,
        "clip_k": clip_k,
        "gated_by_direct": directs is not None,
        "tasks": [t.to_dict() for t in tasks],
        "aggregate": _percentages([t.row for t in included]),
        "included_tasks": len(included),
        "missing_reference": [t.task_id for t in tasks if t.missing_reference],
        "fallback_tasks": [t.task_id for t in tasks if t.row.fallback],
        "failed_tasks": [t.task_id for t in tasks if t.row.failed],
        "dynamics": dynamics_stats(populations, iterations) if populations else None,
    }
    if directs is not None:
        result["direct_aggregate"] = _percentages(
            [t.direct_row for t in included if t.direct_row is not None]
        )
    return result


def _csv_value(value: Any) -> Any:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return value


def write_report(report: Dict[str, Any], out_dir: Path) -> List[Path]:
    """Write report.json, report.csv and best_so_far.csv; returns the paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path, csv_path, series_path = (out_dir / name for name in REPORT_FILES)

    json_path.write_text(
        json.dumps(report, indent=2, ensure_ascii=False, allow_nan=False) + "\n",
        encoding="utf-8",
    )

    with open(csv_path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(ROW_FIELDS)
        for task in report["tasks"]:
            writer.writerow([_csv_value(task[name]) for name in ROW_FIELDS])
        writer.writerow([])
        writer.writerow(["metric", "percent"])
        for name, block in (("", report["aggregate"]), ("direct_", report.get("direct_aggregate"))):
            if block:
                for metric in ("ET", "MP", "MI"):
                    writer.writerow([f"{name}{metric}", f"{block[metric]:.2f}"])
        dynamics = report.get("dynamics")
        if dynamics:
            writer.writerow([])
            writer.writerow(["statistic", "mean"])
            for key in ("imp", "iter_at_best", "last10_imp"):
                writer.writerow([key, f"{dynamics[key]:.2f}"])

    with open(series_path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["task_id", "iteration", "best_integral"])
        for task in report["tasks"]:
            for iteration, value in enumerate(task["best_so_far"]):
                writer.writerow([task["task_id"], iteration, "inf" if value is None else repr(value)])

    logger.info(f"Report written to {out_dir}", extra={"tasks": len(report["tasks"])})
    return [json_path, csv_path, series_path]
