"""
SandboxEvaluator for the evoctl evolution engine

Runs candidate programs against a task's fixtures in fresh child processes
under OS resource limits, samples the resident memory of the child process
tree, and reports execution time, peak memory and the memory-time integral.
"""

import logging
import math
import os
import shutil
import signal
import subprocess
import sys
import tempfile
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, List, Optional, Protocol, Sequence, Tuple

import numpy as np
import psutil

from ..models.eval_models import EvalOutcome, EvalStatus, MemoryTrace, TestResult
from ..models.task_models import Language, TaskSpec, TestCase
from ..util.exceptions import ConfigError, EmptyTrace, SandboxUnavailable

try:
    import resource
except ImportError:  # non-POSIX
    resource = None  # type: ignore[assignment]

logger = logging.getLogger(__name__)

MB = 1024 * 1024
MEMORY_ERROR_MARKERS = (b"MemoryError", b"std::bad_alloc", b"Cannot allocate memory")


class Evaluator(Protocol):
    """Anything that can score a candidate program for a task."""

    def measure(self, code: str, task: TaskSpec) -> EvalOutcome:
        ...


@dataclass(frozen=True)
class SandboxSettings:
    repeats: int = 5
    sample_period: float = 0.001
    max_concurrent: int = 1
    python_executable: str = ""
    cpp_compiler: str = "g++"
    cpp_flags: Tuple[str, ...] = ("-O2", "-std=c++17")
    compile_timeout: float = 60.0

    def __post_init__(self) -> None:
        if self.repeats < 3:
            raise ConfigError("[Sandbox] repeats must be at least 3")
        if self.sample_period <= 0:
            raise ConfigError("[Sandbox] sample_period_sec must be positive")
        if self.max_concurrent < 1:
            raise ConfigError("[Sandbox] max_concurrent must be at least 1")

    @classmethod
    def from_config(cls, config_manager: Any) -> "SandboxSettings":
        return cls(
            repeats=config_manager.getint("Sandbox", "repeats", fallback=5),
            sample_period=config_manager.getfloat(
                "Sandbox", "sample_period_sec", fallback=0.001
            ),
            max_concurrent=config_manager.getint("Sandbox", "max_concurrent", fallback=1),
            python_executable=config_manager.get(
                "Sandbox", "python_executable", fallback=""
            )
            or "",
            cpp_compiler=config_manager.get("Sandbox", "cpp_compiler", fallback="g++")
            or "g++",
            cpp_flags=tuple(
                (config_manager.get("Sandbox", "cpp_flags", fallback="") or "").split()
            ),
            compile_timeout=config_manager.getfloat(
                "Sandbox", "compile_timeout_sec", fallback=60.0
            ),
        )


def integrate_trace(trace: MemoryTrace, end_time: float) -> float:
    """
    Trapezoidal integral of resident memory over [0, end_time], in MB·s.

    The first sample is held back to time 0 and the last sample is held
    forward to end_time.

    Raises:
        EmptyTrace: If the trace has no samples
        ValueError: If end_time precedes the last sample
    """
    if not trace.samples:
        raise EmptyTrace()
    times = np.array([ts for ts, _ in trace.samples], dtype=np.float64)
    values = np.array([rss for _, rss in trace.samples], dtype=np.float64) / MB
    if end_time < times[-1]:
        raise ValueError(f"end_time {end_time} precedes last sample {times[-1]}")

    if times[0] > 0:
        times = np.concatenate(([0.0], times))
        values = np.concatenate(([values[0]], values))
    if end_time > times[-1]:
        times = np.append(times, end_time)
        values = np.append(values, values[-1])

    return float(np.sum((values[1:] + values[:-1]) * np.diff(times)) / 2.0)


def trimmed_mean(values: Sequence[float]) -> float:
    """Sort, drop exactly one minimum and one maximum, average the rest."""
    if len(values) < 3:
        raise ValueError("trimmed_mean needs at least 3 values")
    kept = sorted(values)[1:-1]
    return sum(kept) / len(kept)


def aggregate_runs(outcomes: Sequence[EvalOutcome]) -> EvalOutcome:
    """
    Combine repeated passed runs into one outcome.

    Integral and exec_time are trimmed means; peak_memory is the maximum over
    the runs retained by the integral trimming; per-test details come from the
    median retained run.
    """
    if len(outcomes) < 3:
        raise ValueError("aggregate_runs needs at least 3 runs")
    integrals = [o.integral if o.integral is not None else math.nan for o in outcomes]
    order = sorted(range(len(outcomes)), key=lambda i: (integrals[i], i))
    retained = order[1:-1]
    median_run = outcomes[retained[len(retained) // 2]]
    return EvalOutcome(
        status=EvalStatus.PASSED,
        exec_time=trimmed_mean([o.exec_time for o in outcomes]),
        peak_memory=max(outcomes[i].peak_memory for i in retained),
        integral=trimmed_mean(integrals),
        per_test=list(median_run.per_test),
        runs_used=len(outcomes),
    )


def _tree_rss(process: psutil.Process) -> int:
    """Total RSS of a process and all of its descendants."""
    total = 0
    try:
        total += process.memory_info().rss
        children = process.children(recursive=True)
    except psutil.Error:
        return total
    for child in children:
        try:
            total += child.memory_info().rss
        except psutil.Error:
            pass
    return total


def resolve_peak(trace: MemoryTrace, max_rss: int, spawn_rss: int) -> int:
    """
    Peak resident memory of the child alone.

    ru_maxrss keeps the high-water mark of the address space the child
    inherited from the evaluator before exec, so it only counts when it
    exceeds the evaluator's RSS at spawn. Otherwise the sampled peak stands.
    An empty trace falls back to ru_maxrss as an upper bound.
    """
    attributable = max_rss if max_rss > spawn_rss else 0
    if not trace.samples:
        return attributable or max_rss
    return max(trace.peak, attributable)


class _CompileFailed(Exception):
    pass


class SandboxEvaluator:
    """
    Measures candidates in child processes with CPU-time and address-space
    limits. Distinct candidates may be measured from different threads; the
    number of simultaneous sandboxes is capped by ``max_concurrent``.
    """

    def __init__(self, settings: SandboxSettings) -> None:
        self.settings = settings
        self._slots = threading.BoundedSemaphore(settings.max_concurrent)
        self._evaluator_process = psutil.Process()
        logger.info(
            "SandboxEvaluator initialized",
            extra={
                "repeats": settings.repeats,
                "sample_period": settings.sample_period,
                "max_concurrent": settings.max_concurrent,
            },
        )

    def _check_environment(self, language: Language) -> None:
        if resource is None or not hasattr(os, "wait4"):
            raise SandboxUnavailable("POSIX resource limits and wait4 are required")
        if language is Language.CPP and shutil.which(self.settings.cpp_compiler) is None:
            raise SandboxUnavailable(
                f"C++ compiler '{self.settings.cpp_compiler}' not found",
            )

    def measure(self, code: str, task: TaskSpec, repeats: Optional[int] = None) -> EvalOutcome:
        """
        Run the candidate ``repeats`` times and aggregate.

        Any failing run makes the whole outcome that failure and ends the
        measurement early; ``runs_used`` still reports the requested repeats.
        Repeats of one candidate are serialized inside a single sandbox slot.
        """
        if repeats is None:
            repeats = self.settings.repeats
        if repeats < 3:
            raise ConfigError("measure needs at least 3 repeats")

        outcomes: List[EvalOutcome] = []
        with self._slots:
            for run in range(1, repeats + 1):
                outcome = self.run_once(code, task)
                if not outcome.passed:
                    outcome.runs_used = repeats
                    logger.info(
                        "Candidate failed during repeated measurement",
                        extra={
                            "task_id": task.task_id,
                            "status": outcome.status.value,
                            "failed_run": run,
                        },
                    )
                    return outcome
                outcomes.append(outcome)
        return aggregate_runs(outcomes)

    def run_once(self, code: str, task: TaskSpec) -> EvalOutcome:
        """
        Compile if needed, then run every test in a fresh child process,
        stopping at the first failing test.
        """
        if not code.strip():
            return EvalOutcome.failure(EvalStatus.COMPILE_ERROR, "empty program")
        self._check_environment(task.language)

        with tempfile.TemporaryDirectory(prefix="evoctl-") as workdir:
            try:
                command = self._prepare(code, task.language, Path(workdir))
            except _CompileFailed as e:
                return EvalOutcome.failure(EvalStatus.COMPILE_ERROR, str(e))

            results: List[TestResult] = []
            for index, test in enumerate(task.tests):
                result = self._run_test(command, index, test, task, Path(workdir))
                results.append(result)
                if result.status is not EvalStatus.PASSED:
                    break
        return EvalOutcome.from_tests(results)

    def _prepare(self, code: str, language: Language, workdir: Path) -> List[str]:
        if language is Language.PYTHON:
            source = workdir / "solution.py"
            source.write_text(code, encoding="utf-8")
            return [self.settings.python_executable or sys.executable, str(source)]

        source = workdir / "solution.cpp"
        binary = workdir / "solution"
        source.write_text(code, encoding="utf-8")
        try:
            completed = subprocess.run(
                [
                    self.settings.cpp_compiler,
                    *self.settings.cpp_flags,
                    "-o",
                    str(binary),
                    str(source),
                ],
                capture_output=True,
                timeout=self.settings.compile_timeout,
            )
        except subprocess.TimeoutExpired as e:
            raise _CompileFailed("compilation timed out") from e
        if completed.returncode != 0:
            raise _CompileFailed(completed.stderr.decode(errors="replace")[-2000:])
        return [str(binary)]

    def _limits(self, task: TaskSpec) -> Callable[[], None]:
        cpu_seconds = int(math.ceil(task.time_limit)) + 1
        memory = int(task.memory_limit)

        def apply() -> None:
            resource.setrlimit(resource.RLIMIT_CPU, (cpu_seconds, cpu_seconds + 1))
            try:
                resource.setrlimit(resource.RLIMIT_AS, (memory, memory))
            except (ValueError, OSError):
                # Some platforms refuse RLIMIT_AS; sampling still enforces it
                pass

        return apply

    def _run_test(
        self,
        command: List[str],
        index: int,
        test: TestCase,
        task: TaskSpec,
        workdir: Path,
    ) -> TestResult:
        input_path = workdir / f"{index:03d}.in"
        output_path = workdir / f"{index:03d}.actual"
        error_path = workdir / f"{index:03d}.err"
        input_path.write_bytes(test.input)

        trace = MemoryTrace(sample_period=self.settings.sample_period)
        with open(input_path, "rb") as stdin, open(output_path, "wb") as stdout, open(
            error_path, "wb"
        ) as stderr:
            spawn_rss = self._evaluator_process.memory_info().rss
            start = time.perf_counter()
            proc = subprocess.Popen(
                command,
                stdin=stdin,
                stdout=stdout,
                stderr=stderr,
                cwd=str(workdir),
                preexec_fn=self._limits(task),
                start_new_session=True,
            )
            elapsed, exit_code, max_rss, verdict = self._watch(proc, start, trace, task)

        peak = resolve_peak(trace, max_rss, spawn_rss)
        if not trace.samples:
            trace.add(0.0, peak)
        integral = integrate_trace(trace, max(elapsed, trace.samples[-1][0]))
        stderr_tail = error_path.read_bytes()[-4000:]

        if verdict is None:
            verdict = self._classify(exit_code, peak, stderr_tail, task)
        if verdict is None:
            verdict = (
                EvalStatus.PASSED
                if test.matches(output_path.read_bytes())
                else EvalStatus.WRONG_ANSWER
            )

        detail = ""
        if verdict is EvalStatus.RUNTIME_ERROR:
            detail = stderr_tail.decode(errors="replace")[-500:]
        logger.debug(
            "Test finished",
            extra={
                "task_id": task.task_id,
                "test_index": index,
                "status": verdict.value,
                "time": elapsed,
                "peak": peak,
            },
        )
        return TestResult(
            test_index=index,
            status=verdict,
            time=elapsed,
            peak=peak,
            integral=integral,
            detail=detail,
        )

    def _watch(
        self,
        proc: subprocess.Popen,
        start: float,
        trace: MemoryTrace,
        task: TaskSpec,
    ) -> Tuple[float, int, int, Optional[EvalStatus]]:
        """
        Poll the child until it exits or violates a limit.

        Returns:
            Tuple of (elapsed seconds, exit code, peak RSS from rusage in
            bytes, limit verdict or None)
        """
        try:
            handle: Optional[psutil.Process] = psutil.Process(proc.pid)
        except psutil.Error:
            handle = None

        verdict: Optional[EvalStatus] = None
        while True:
            # Sample before reaping so even short runs leave a post-exec sample
            now = time.perf_counter() - start
            if handle is not None:
                rss = _tree_rss(handle)
                if rss:
                    trace.add(now, rss)
                if rss > task.memory_limit:
                    verdict = EvalStatus.MEMORY_EXCEEDED

            pid, wait_status, usage = os.wait4(proc.pid, os.WNOHANG)
            if pid != 0:
                proc.returncode = os.waitstatus_to_exitcode(wait_status)
                now = max(time.perf_counter() - start, now)
                return now, proc.returncode, self._rusage_bytes(usage), verdict

            if verdict is None and now > task.time_limit:
                verdict = EvalStatus.TIMEOUT

            if verdict is not None:
                self._kill_tree(proc)
                _, wait_status, usage = os.wait4(proc.pid, 0)
                proc.returncode = os.waitstatus_to_exitcode(wait_status)
                now = time.perf_counter() - start
                return now, proc.returncode, self._rusage_bytes(usage), verdict

            time.sleep(self.settings.sample_period)

    @staticmethod
    def _rusage_bytes(usage: Any) -> int:
        # ru_maxrss is KiB on Linux, bytes on macOS
        scale = 1 if sys.platform == "darwin" else 1024
        return int(usage.ru_maxrss) * scale

    @staticmethod
    def _kill_tree(proc: subprocess.Popen) -> None:
        try:
            os.killpg(proc.pid, signal.SIGKILL)
        except (ProcessLookupError, PermissionError):
            try:
                proc.kill()
            except ProcessLookupError:
                pass

    @staticmethod
    def _classify(
        exit_code: int, peak: int, stderr_tail: bytes, task: TaskSpec
    ) -> Optional[EvalStatus]:
        """Map an abnormal exit to a failure status; None for a clean exit."""
        if peak > task.memory_limit:
            return EvalStatus.MEMORY_EXCEEDED
        if exit_code < 0:
            if -exit_code in (signal.SIGXCPU, signal.SIGKILL):
                return EvalStatus.TIMEOUT
            return EvalStatus.RUNTIME_ERROR
        if exit_code > 0:
            if any(marker in stderr_tail for marker in MEMORY_ERROR_MARKERS):
                return EvalStatus.MEMORY_EXCEEDED
            return EvalStatus.RUNTIME_ERROR
        return None
