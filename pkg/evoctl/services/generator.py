"""
Generator for the evoctl evolution engine

The Generator turns engine requests into rendered prompts, sends them to a
completion backend and parses the responses. Backends (HTTP chat endpoint,
offline mock) only map a CompletionRequest to response text, so the engine
issues the same call sequence whichever backend is installed.
"""

import hashlib
import json
import logging
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Protocol, Sequence, Tuple, TypeVar

from ..models.candidate_models import Candidate, SlotDiagnosis, Sketch, StepRecord, describe_candidates
from ..models.context_models import Context
from ..models.memory_models import EMPTY_MEMORY, ExperienceItem, LocalMemory, Reflection
from ..models.task_models import Language, TaskSpec
from ..util.exceptions import GenerationExhausted, ParseError
from . import response_parsers
from .prompt_templates import PromptLibrary, RenderedPrompt

logger = logging.getLogger(__name__)

T = TypeVar("T")

OPTIMIZATION_TARGET = "memory-time integral"
NO_DIAGNOSIS = "(no diagnosis available)"


@dataclass(frozen=True)
class CompletionRequest:
    """
    One completion call.

    ``inputs`` carries the raw engine objects behind the rendered prompt; the
    HTTP backend ignores them, the mock backend answers from them.
    """

    op: str
    prompt: RenderedPrompt
    temperature: float
    max_tokens: int
    inputs: Mapping[str, Any] = field(default_factory=dict)
    attempt: int = 1


class CompletionBackend(Protocol):
    name: str

    def complete(self, request: CompletionRequest) -> str:
        ...


@dataclass(frozen=True)
class GeneratorSettings:
    temperature_generate: float = 0.7
    temperature_parse: float = 0.0
    max_tokens: int = 4096
    parse_retries: int = 3
    allowed_imports: Mapping[str, str] = field(default_factory=dict)

    @classmethod
    def from_config(cls, config_manager: Any) -> "GeneratorSettings":
        return cls(
            temperature_generate=config_manager.getfloat(
                "Generator", "temperature_generate", fallback=0.7
            ),
            temperature_parse=config_manager.getfloat(
                "Generator", "temperature_parse", fallback=0.0
            ),
            max_tokens=config_manager.getint("Generator", "max_tokens", fallback=4096),
            parse_retries=config_manager.getint("Engine", "parse_retries", fallback=3),
            allowed_imports={
                Language.PYTHON.value: ", ".join(
                    config_manager.getlist("Generator", "allowed_imports_python")
                ),
                Language.CPP.value: ", ".join(
                    config_manager.getlist("Generator", "allowed_imports_cpp")
                ),
            },
        )


def solution_block(candidate: Candidate, diagnosis: Optional[SlotDiagnosis] = None) -> str:
    """Diagnosis summary followed by the candidate's code."""
    diagnosis = diagnosis or candidate.diagnosis
    summary = diagnosis.summary() if diagnosis else NO_DIAGNOSIS
    return f"{summary}\n\n```\n{candidate.code}```"


def render_steps(steps: Sequence[Tuple[StepRecord, Candidate]]) -> str:
    if not steps:
        return EMPTY_MEMORY
    blocks = []
    for step, child in steps:
        blocks.append(
            f"- t={step.iteration} {step.operator.value} "
            f"parents={list(step.parent_ids)} -> child {step.child_id}, "
            f"delta={step.delta:+.6f}\n```\n{child.code}```"
        )
    return "\n".join(blocks)


class Generator:
    """
    The agent behind every engine capability.

    Every capability returns a parsed value. Unparseable responses are
    retried up to ``parse_retries`` times before GenerationExhausted is
    raised; transport errors from the backend propagate unchanged.
    """

    def __init__(
        self,
        backend: CompletionBackend,
        prompts: PromptLibrary,
        settings: GeneratorSettings,
        call_trace_path: Optional[Path] = None,
    ) -> None:
        self.backend = backend
        self.prompts = prompts
        self.settings = settings
        self.call_trace: List[Dict[str, Any]] = []
        self._trace_lock = threading.Lock()
        self.call_trace_path = call_trace_path
        logger.info(
            f"Generator initialized with backend: {getattr(backend, 'name', type(backend).__name__)}",
            extra={"parse_retries": settings.parse_retries},
        )

    def _trace(self, request: CompletionRequest, outcome: str) -> None:
        entry = {
            "task_id": getattr(request.inputs.get("task"), "task_id", ""),
            "op": request.op,
            "attempt": request.attempt,
            "temperature": request.temperature,
            "prompt_sha256": hashlib.sha256(
                (request.prompt.system + "\n" + request.prompt.user).encode()
            ).hexdigest(),
            "outcome": outcome,
        }
        with self._trace_lock:
            self.call_trace.append(entry)
            if self.call_trace_path is not None:
                with open(self.call_trace_path, "a", encoding="utf-8") as f:
                    f.write(json.dumps(entry) + "\n")

    def _call(
        self,
        op: str,
        template: str,
        context: Mapping[str, Any],
        parser: Callable[[str], T],
        inputs: Mapping[str, Any],
        parse_critical: bool = False,
    ) -> T:
        prompt = self.prompts.render(template, context)
        temperature = (
            self.settings.temperature_parse if parse_critical else self.settings.temperature_generate
        )
        attempts = 1 + self.settings.parse_retries
        last_error: Optional[ParseError] = None
        for attempt in range(1, attempts + 1):
            request = CompletionRequest(
                op=op,
                prompt=prompt,
                temperature=temperature,
                max_tokens=self.settings.max_tokens,
                inputs=inputs,
                attempt=attempt,
            )
            text = self.backend.complete(request)
            try:
                value = parser(text)
            except ParseError as e:
                last_error = e
                self._trace(request, f"parse_error:{e.reason}")
                logger.warning(
                    f"Unparseable {op} response (attempt {attempt}/{attempts}): {e.reason}",
                )
                continue
            self._trace(request, "ok")
            return value

        raise GenerationExhausted(
            f"{op} output unparseable after {attempts} attempts",
            details={"op": op, "reason": last_error.reason if last_error else ""},
        ) from last_error

    def _code_context(self, task: TaskSpec, ctx: Optional[Context]) -> Dict[str, Any]:
        return {
            "optimization_target": OPTIMIZATION_TARGET,
            "language": task.language.value,
            "task_description": task.statement,
            "allowed_imports_scope": self.settings.allowed_imports.get(task.language.value)
            or "standard library only",
            "local_memory": ctx.local_memory_render if ctx else EMPTY_MEMORY,
            "global_memory": ctx.global_memory_render() if ctx else EMPTY_MEMORY,
            "best_summary": ctx.best_summary if ctx else EMPTY_MEMORY,
        }

    def plan_strategies(self, task: TaskSpec, k: int) -> List[Sketch]:
        return self._call(
            "plan_strategies",
            "planning",
            {"problem_text": task.statement, "k": k, "language": task.language.value},
            lambda text: response_parsers.parse_strategies(text, k),
            {"task": task, "k": k},
        )

    def implement(self, task: TaskSpec, sketch: Sketch, ctx: Optional[Context] = None) -> str:
        context = self._code_context(task, ctx)
        context["strategy"] = sketch.strategy_text
        return self._call(
            "implement",
            "implement",
            context,
            response_parsers.parse_final_code,
            {"task": task, "sketch": sketch, "ctx": ctx},
        )

    def direct(self, task: TaskSpec) -> str:
        return self._call(
            "direct",
            "direct",
            self._code_context(task, None),
            response_parsers.parse_final_code,
            {"task": task},
        )

    def refine(
        self,
        task: TaskSpec,
        parent: Candidate,
        diagnosis: Optional[SlotDiagnosis],
        ctx: Context,
    ) -> str:
        context = self._code_context(task, ctx)
        context["source_summary"] = diagnosis.summary() if diagnosis else NO_DIAGNOSIS
        context["current_program"] = f"```\n{parent.code}```"
        return self._call(
            "refine",
            "mutation",
            context,
            response_parsers.parse_final_code,
            {"task": task, "parent": parent, "diagnosis": diagnosis, "ctx": ctx},
        )

    def crossover(
        self,
        task: TaskSpec,
        parent_a: Candidate,
        parent_b: Candidate,
        diagnoses: Tuple[Optional[SlotDiagnosis], Optional[SlotDiagnosis]],
        ctx: Context,
    ) -> str:
        context = self._code_context(task, ctx)
        context["solution_1"] = solution_block(parent_a, diagnoses[0])
        context["solution_2"] = solution_block(parent_b, diagnoses[1])
        return self._call(
            "crossover",
            "crossover",
            context,
            response_parsers.parse_final_code,
            {
                "task": task,
                "parent_a": parent_a,
                "parent_b": parent_b,
                "diagnoses": diagnoses,
                "ctx": ctx,
            },
        )

    def diagnose(self, task: TaskSpec, target_code: str, reference_code: str) -> SlotDiagnosis:
        return self._call(
            "diagnose",
            "decomposition",
            {
                "language": task.language.value,
                "optimization_target": OPTIMIZATION_TARGET,
                "problem_description": task.statement,
                "best_solution": f"```\n{reference_code}```",
                "target_solution": f"```\n{target_code}```",
            },
            lambda text: response_parsers.parse_diagnosis(text, target_code),
            {"task": task, "target_code": target_code, "reference_code": reference_code},
            parse_critical=True,
        )

    def _reflect(
        self,
        op: str,
        task: TaskSpec,
        parents: Sequence[Candidate],
        child: Candidate,
        local_memory: LocalMemory,
        delta: float,
    ) -> Reflection:
        return self._call(
            op,
            op,
            {
                "source_solutions": describe_candidates(parents),
                "current_solution": describe_candidates([child]),
                "directions": local_memory.render_directions(),
            },
            response_parsers.parse_reflection,
            {
                "task": task,
                "parents": list(parents),
                "child": child,
                "local_memory": local_memory,
                "delta": delta,
            },
        )

    def reflect_success(
        self,
        task: TaskSpec,
        parents: Sequence[Candidate],
        child: Candidate,
        local_memory: LocalMemory,
        delta: float,
    ) -> Reflection:
        return self._reflect("reflect_success", task, parents, child, local_memory, delta)

    def reflect_failure(
        self,
        task: TaskSpec,
        parents: Sequence[Candidate],
        child: Candidate,
        local_memory: LocalMemory,
        delta: float,
    ) -> Reflection:
        return self._reflect("reflect_failure", task, parents, child, local_memory, delta)

    def compress(self, task: TaskSpec, local_memory: LocalMemory) -> LocalMemory:
        return self._call(
            "compress",
            "compress",
            {
                "directions": local_memory.render_directions(),
                "experience_library": local_memory.render_experiences(),
            },
            response_parsers.parse_compress,
            {"task": task, "local_memory": local_memory},
            parse_critical=True,
        )

    def queries(self, task: TaskSpec, ctx: Context, n: int) -> List[str]:
        return self._call(
            "queries",
            "queries",
            {
                "problem_description": task.statement,
                "optimization_target": OPTIMIZATION_TARGET,
                "language": task.language.value,
                "local_memory": ctx.local_memory_render,
            },
            lambda text: response_parsers.parse_queries(text, n),
            {"task": task, "ctx": ctx, "n": n},
        )

    def distill(
        self,
        task: TaskSpec,
        improvements: Sequence[Tuple[StepRecord, Candidate]],
        regressions: Sequence[Tuple[StepRecord, Candidate]],
        best: Candidate,
    ) -> List[ExperienceItem]:
        return self._call(
            "distill",
            "global_extract",
            {
                "problem_description": task.statement,
                "improvement_steps": render_steps(improvements),
                "regression_steps": render_steps(regressions),
                "best_solution": f"```\n{best.code}```",
            },
            response_parsers.parse_distill,
            {
                "task": task,
                "improvements": list(improvements),
                "regressions": list(regressions),
                "best": best,
            },
            parse_critical=True,
        )
