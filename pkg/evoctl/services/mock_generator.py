"""
Offline generator backend over a synthetic solution landscape

A MockLandscape gives every functional slot a set of variants with a known
memory-time cost; some variants are bugs that fail the tests. Candidate
programs are executable stubs whose header lines record the variant chosen
for each slot and whose body echoes stdin while holding memory for a time
proportional to the declared cost. The mock backend answers every prompt
with text that obeys the same response schemas as a real model.
"""

import json
import logging
import re
import threading
from dataclasses import dataclass
from typing import Any, Callable, Dict, FrozenSet, List, Mapping, Optional, Sequence, Set, Tuple

import numpy as np

from ..models.candidate_models import SLOT_IDS, Candidate, SlotDiagnosis, StepRecord
from ..models.eval_models import EvalOutcome, EvalStatus, TestResult
from ..models.memory_models import DirectionStatus, LocalMemory
from ..models.task_models import Comparison, Language, ReferenceStats, TaskSpec, TestCase
from ..util.exceptions import ConfigError, ValidationError
from ..util.seeding import derive_seed
from .generator import CompletionRequest

logger = logging.getLogger(__name__)

MB = 1024 * 1024
FIRST_SLOT_LINE = 3
SLOT_LINE = re.compile(r"^(?:#|//) slot ([a-z_]+) = v(\d+)$")
FAILED_DIRECTION = re.compile(r"\[Failed\] ([a-z_]+)=v(\d+)\b")
MAX_REFLECTION_ITEMS = 3
KEEP_EXPERIENCES = 8
KEEP_SUCCESS_DIRECTIONS = 5

Assignment = Dict[str, int]


@dataclass(frozen=True)
class MockSettings:
    n_slots: int = 5
    n_variants: int = 8
    bug_slots: int = 2
    cost_scale: float = 0.001
    hold_mb: int = 16

    def __post_init__(self) -> None:
        if not 3 <= self.n_slots <= len(SLOT_IDS):
            raise ConfigError("[Mock] n_slots must be between 3 and 5")
        if self.n_variants < 2:
            raise ConfigError("[Mock] n_variants must be at least 2")
        if not 0 <= self.bug_slots <= self.n_slots:
            raise ConfigError("[Mock] bug_slots must be between 0 and n_slots")
        if self.cost_scale <= 0 or self.hold_mb < 1:
            raise ConfigError("[Mock] cost_scale and hold_mb must be positive")

    @classmethod
    def from_config(cls, config_manager: Any) -> "MockSettings":
        return cls(
            n_slots=config_manager.getint("Mock", "n_slots", fallback=5),
            n_variants=config_manager.getint("Mock", "n_variants", fallback=8),
            bug_slots=config_manager.getint("Mock", "bug_slots", fallback=2),
            cost_scale=config_manager.getfloat("Mock", "cost_scale", fallback=0.001),
            hold_mb=config_manager.getint("Mock", "hold_mb", fallback=16),
        )


@dataclass(frozen=True)
class MockLandscape:
    """
    Per-slot variant costs in MB·s and the set of failing variants.

    The cost of a program is the sum of its slot variants' costs.
    """

    slot_costs: Mapping[str, Tuple[Tuple[int, float], ...]]
    bug_variants: FrozenSet[Tuple[str, int]] = frozenset()

    def __post_init__(self) -> None:
        for slot, variants in self.slot_costs.items():
            if not any((slot, v) not in self.bug_variants for v, _ in variants):
                raise ValidationError(f"Slot '{slot}' has no passing variant")

    @property
    def slot_ids(self) -> Tuple[str, ...]:
        return tuple(self.slot_costs)

    def variants(self, slot: str) -> List[int]:
        return [v for v, _ in self.slot_costs[slot]]

    def cost_of(self, slot: str, variant: int) -> float:
        for v, cost in self.slot_costs[slot]:
            if v == variant:
                return cost
        raise ValidationError(f"Unknown variant v{variant} for slot '{slot}'")

    def is_bug(self, slot: str, variant: int) -> bool:
        return (slot, variant) in self.bug_variants

    def best_variant(self, slot: str) -> int:
        passing = [(cost, v) for v, cost in self.slot_costs[slot] if not self.is_bug(slot, v)]
        return min(passing)[1]

    @property
    def optimum_cost(self) -> float:
        return sum(self.cost_of(slot, self.best_variant(slot)) for slot in self.slot_ids)

    def program_cost(self, assignment: Assignment) -> float:
        return sum(self.cost_of(slot, assignment[slot]) for slot in self.slot_ids)

    def passes(self, assignment: Assignment) -> bool:
        return not any(self.is_bug(slot, assignment[slot]) for slot in self.slot_ids)

    def valid(self, assignment: Optional[Assignment]) -> bool:
        if assignment is None or set(assignment) != set(self.slot_ids):
            return False
        return all(assignment[s] in self.variants(s) for s in self.slot_ids)

    @classmethod
    def generate(
        cls,
        seed: int,
        n_slots: int = 5,
        n_variants: int = 8,
        bug_slots: int = 2,
    ) -> "MockLandscape":
        """
        Draw a landscape: one cheap variant per slot, the rest expensive, and
        one expensive failing variant in each of ``bug_slots`` slots.
        """
        rng = np.random.default_rng(seed)
        slots = SLOT_IDS[:n_slots]
        slot_costs: Dict[str, Tuple[Tuple[int, float], ...]] = {}
        best_index: Dict[str, int] = {}
        for slot in slots:
            costs = rng.uniform(120.0, 240.0, size=n_variants)
            best = int(rng.integers(n_variants))
            costs[best] = rng.uniform(10.0, 30.0)
            best_index[slot] = best
            slot_costs[slot] = tuple((v, round(float(c), 3)) for v, c in enumerate(costs))

        bugs: Set[Tuple[str, int]] = set()
        for index in rng.choice(n_slots, size=bug_slots, replace=False):
            slot = slots[int(index)]
            others = [v for v in range(n_variants) if v != best_index[slot]]
            bugs.add((slot, others[int(rng.integers(len(others)))]))
        return cls(slot_costs=slot_costs, bug_variants=frozenset(bugs))


def read_assignment(code: str) -> Optional[Assignment]:
    """Slot variants declared in a stub's header, or None for foreign code."""
    assignment: Assignment = {}
    for line in code.splitlines():
        match = SLOT_LINE.match(line.strip())
        if match:
            assignment[match.group(1)] = int(match.group(2))
    return assignment or None


def slot_lines(code: str) -> Dict[str, int]:
    """1-based line number of each slot declaration."""
    lines: Dict[str, int] = {}
    for number, line in enumerate(code.splitlines(), start=1):
        match = SLOT_LINE.match(line.strip())
        if match:
            lines[match.group(1)] = number
    return lines


def failed_directions(local_memory_render: str) -> Set[Tuple[str, int]]:
    return {(m.group(1), int(m.group(2))) for m in FAILED_DIRECTION.finditer(local_memory_render)}


PYTHON_STUB = """\
import sys
import time

SECONDS = {seconds!r}
HOLD_MB = {hold_mb}
BUGGY = {buggy}


def main():
    data = sys.stdin.buffer.read()
    block = bytearray(b"\\x01") * (HOLD_MB * 1024 * 1024)
    deadline = time.perf_counter() + SECONDS
    while time.perf_counter() < deadline:
        block[0] ^= 1
    sys.stdout.buffer.write(b"WRONG\\n" if BUGGY else data)


if __name__ == "__main__":
    main()
"""

CPP_STUB = """\
#include <chrono>
#include <iostream>
#include <iterator>
#include <string>
#include <vector>

int main() {{
    const double seconds = {seconds!r};
    const bool buggy = {buggy};
    std::string data((std::istreambuf_iterator<char>(std::cin)), std::istreambuf_iterator<char>());
    std::vector<char> block({hold_mb} * 1024 * 1024, 1);
    auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(seconds);
    volatile char sink = 0;
    while (std::chrono::steady_clock::now() < deadline) {{
        sink = sink ^ block[0];
    }}
    std::cout << (buggy ? std::string("WRONG\\n") : data);
    return 0;
}}
"""


def render_program(
    assignment: Assignment,
    landscape: MockLandscape,
    settings: MockSettings,
    language: Language = Language.PYTHON,
) -> str:
    """Stub program for a slot assignment; slot headers sit on lines 3 onwards."""
    comment = "#" if language is Language.PYTHON else "//"
    header = [
        f"{comment} evoctl synthetic candidate",
        f"{comment} declared cost follows the slot variants below",
    ]
    header += [f"{comment} slot {slot} = v{assignment[slot]}" for slot in landscape.slot_ids]
    cost = landscape.program_cost(assignment)
    values = {
        "seconds": round(cost * settings.cost_scale / settings.hold_mb, 9),
        "hold_mb": settings.hold_mb,
    }
    if language is Language.PYTHON:
        body = PYTHON_STUB.format(buggy=str(not landscape.passes(assignment)), **values)
    else:
        body = CPP_STUB.format(buggy=str(not landscape.passes(assignment)).lower(), **values)
    return "\n".join(header) + "\n\n" + body


def _fenced_json(payload: Dict[str, Any]) -> str:
    return "```json\n" + json.dumps(payload, indent=2) + "\n```\n"


def _code_response(code: str, language: Language, note: str) -> str:
    fence = "python" if language is Language.PYTHON else "cpp"
    return f"### 1. Thinking\n\n{note}\n\n### 2. Final Code\n\n```{fence}\n{code}```\n"


def _random_assignment(landscape: MockLandscape, rng: np.random.Generator) -> Assignment:
    assignment: Assignment = {}
    for slot in landscape.slot_ids:
        variants = landscape.variants(slot)
        assignment[slot] = variants[int(rng.integers(len(variants)))]
    return assignment


def _worst_slot(
    diagnosis: SlotDiagnosis, assignment: Assignment, landscape: MockLandscape
) -> Optional[str]:
    """First bug_source slot, else the bottleneck with the largest excess cost."""
    verdicts = [v for v in diagnosis.diagnoses if v.slot_id in assignment]
    for verdict in verdicts:
        if verdict.status == "bug_source":
            return verdict.slot_id
    worst: Optional[str] = None
    worst_excess = 0.0
    for verdict in verdicts:
        if verdict.status != "bottleneck":
            continue
        slot = verdict.slot_id
        excess = landscape.cost_of(slot, assignment[slot]) - landscape.cost_of(
            slot, landscape.best_variant(slot)
        )
        if excess > worst_excess:
            worst, worst_excess = slot, excess
    return worst


def _plan(inputs: Mapping[str, Any], landscape: MockLandscape, rng: np.random.Generator, settings: MockSettings) -> str:
    k = int(inputs["k"])
    strategies = [
        f"Strategy {i + 1}: assemble the program from independently chosen "
        f"component variants (mix {i + 1} of {k}); linear time, constant extra memory"
        for i in range(k)
    ]
    return _fenced_json({"strategies": strategies})


def _implement(inputs: Mapping[str, Any], landscape: MockLandscape, rng: np.random.Generator, settings: MockSettings) -> str:
    task: TaskSpec = inputs["task"]
    code = render_program(_random_assignment(landscape, rng), landscape, settings, task.language)
    return _code_response(code, task.language, "Implement the planned variant mix.")


def _refine(inputs: Mapping[str, Any], landscape: MockLandscape, rng: np.random.Generator, settings: MockSettings) -> str:
    task: TaskSpec = inputs["task"]
    parent: Candidate = inputs["parent"]
    diagnosis: Optional[SlotDiagnosis] = inputs.get("diagnosis")
    ctx = inputs.get("ctx")
    assignment = read_assignment(parent.code)
    if not landscape.valid(assignment):
        code = render_program(_random_assignment(landscape, rng), landscape, settings, task.language)
        return _code_response(code, task.language, "Rewrite from scratch.")
    assert assignment is not None

    if diagnosis is None:
        slots = landscape.slot_ids
        slot = slots[int(rng.integers(len(slots)))]
        variants = landscape.variants(slot)
        assignment[slot] = variants[int(rng.integers(len(variants)))]
        note = f"Rewrite component {slot} without a diagnosis."
    else:
        failed = failed_directions(ctx.local_memory_render if ctx is not None else "")
        target = _worst_slot(diagnosis, assignment, landscape)
        note = "No component needs work; keep the program."
        if target is not None:
            current = assignment[target]
            current_cost = landscape.cost_of(target, current)
            current_is_bug = landscape.is_bug(target, current)
            options = [
                (cost, v)
                for v, cost in landscape.slot_costs[target]
                if v != current
                and not landscape.is_bug(target, v)
                and (target, v) not in failed
                and (current_is_bug or cost < current_cost)
            ]
            if options:
                assignment[target] = min(options)[1]
                note = f"Replace component {target} with variant v{assignment[target]}."

    if assignment == read_assignment(parent.code):
        return _code_response(parent.code, task.language, note)
    code = render_program(assignment, landscape, settings, task.language)
    return _code_response(code, task.language, note)


def _crossover(inputs: Mapping[str, Any], landscape: MockLandscape, rng: np.random.Generator, settings: MockSettings) -> str:
    task: TaskSpec = inputs["task"]
    parent_a: Candidate = inputs["parent_a"]
    parent_b: Candidate = inputs["parent_b"]
    ctx = inputs.get("ctx")
    a = read_assignment(parent_a.code)
    b = read_assignment(parent_b.code)
    if not (landscape.valid(a) and landscape.valid(b)):
        return _code_response(parent_a.code, task.language, "Parents are not comparable.")
    assert a is not None and b is not None

    failed = failed_directions(ctx.local_memory_render if ctx is not None else "")
    child: Assignment = {}
    for slot in landscape.slot_ids:
        ranked = sorted({a[slot], b[slot]}, key=lambda v: (landscape.cost_of(slot, v), v))
        allowed = [v for v in ranked if (slot, v) not in failed]
        child[slot] = allowed[0] if allowed else a[slot]

    if child == a:
        return _code_response(parent_a.code, task.language, "Solution 1 already dominates.")
    code = render_program(child, landscape, settings, task.language)
    return _code_response(code, task.language, "Take the cheaper component from each parent.")


def _diagnose(inputs: Mapping[str, Any], landscape: MockLandscape, rng: np.random.Generator, settings: MockSettings) -> str:
    target_code: str = inputs["target_code"]
    target = read_assignment(target_code)
    if not landscape.valid(target):
        return "The target solution does not follow a recognizable structure."
    assert target is not None
    reference = read_assignment(inputs.get("reference_code") or "")
    if not landscape.valid(reference):
        reference = None
    lines = slot_lines(target_code)

    slots = []
    diagnoses = []
    for slot in landscape.slot_ids:
        variant = target[slot]
        cost = landscape.cost_of(slot, variant)
        best_cost = landscape.cost_of(slot, landscape.best_variant(slot))
        evidence = [f"cost={cost:.3f} MB*s", f"slot optimum={best_cost:.3f} MB*s"]
        perf_level = "neutral"
        if reference is not None:
            ref_cost = landscape.cost_of(slot, reference[slot])
            evidence.append(f"reference cost={ref_cost:.3f} MB*s")
            if cost > ref_cost:
                perf_level = "weak"
            elif cost < ref_cost:
                perf_level = "strong"

        if landscape.is_bug(slot, variant):
            verdict = ("bug_source", "major_risk", "unknown", "inspect")
        elif cost > best_cost:
            verdict = ("bottleneck", "good", perf_level, "optimize")
        else:
            verdict = ("ok", "good", perf_level, "inherit")

        slots.append(
            {
                "slot_id": slot,
                "description": f"{slot} implemented as variant v{variant}",
                "tags": [f"variant_v{variant}"],
                "code_span": [lines[slot], lines[slot]],
            }
        )
        diagnoses.append(
            {
                "slot_id": slot,
                "status": verdict[0],
                "correctness_level": verdict[1],
                "perf_level": verdict[2],
                "priority": verdict[3],
                "evidence": evidence,
            }
        )

    mix = "-".join(f"v{target[s]}" for s in landscape.slot_ids)
    return _fenced_json(
        {
            "solution_name": f"mix {mix}",
            "approach_summary": f"Variant mix with declared cost {landscape.program_cost(target):.3f} MB*s",
            "slot_view": {"slots": slots, "diagnoses": diagnoses},
        }
    )


def _neutral_reflection(reason: str) -> str:
    return _fenced_json(
        {
            "thought_process": reason,
            "new_direction_items": [
                {
                    "direction": "unchanged program",
                    "description": "Child code equals its parent; the delta is noise.",
                    "status": DirectionStatus.NEUTRAL.value,
                }
            ],
            "new_memory_items": [],
        }
    )


def _reflect(success: bool) -> Callable[..., str]:
    def respond(inputs: Mapping[str, Any], landscape: MockLandscape, rng: np.random.Generator, settings: MockSettings) -> str:
        parents: Sequence[Candidate] = inputs["parents"]
        child: Candidate = inputs["child"]
        parent = read_assignment(parents[0].code)
        current = read_assignment(child.code)
        if child.code == parents[0].code or current == parent:
            return _neutral_reflection("The program did not change.")
        if not (landscape.valid(parent) and landscape.valid(current)):
            return _fenced_json(
                {"thought_process": "Unrecognized programs.", "new_direction_items": [], "new_memory_items": []}
            )
        assert parent is not None and current is not None

        changed = [s for s in landscape.slot_ids if current[s] != parent[s]]
        if success:
            culprits = changed
        elif not child.passed:
            culprits = [s for s in changed if landscape.is_bug(s, current[s])] or changed
        else:
            culprits = [
                s for s in changed if landscape.cost_of(s, current[s]) > landscape.cost_of(s, parent[s])
            ] or changed

        directions = []
        memories = []
        for slot in culprits[:MAX_REFLECTION_ITEMS]:
            variant = current[slot]
            cost = landscape.cost_of(slot, variant)
            name = f"{slot}=v{variant}"
            if success:
                directions.append(
                    {
                        "direction": name,
                        "description": f"Variant v{variant} lowers {slot} to {cost:.3f} MB*s.",
                        "status": DirectionStatus.SUCCESS.value,
                    }
                )
                memories.append(
                    {
                        "type": "Success",
                        "title": f"Use variant v{variant} for {slot}",
                        "description": f"{slot} costs {cost:.3f} MB*s with v{variant}.",
                        "content": f"Switching {slot} to v{variant} reduced the integral while tests kept passing.",
                    }
                )
            else:
                reason = "fails the tests" if landscape.is_bug(slot, variant) else f"costs {cost:.3f} MB*s"
                directions.append(
                    {
                        "direction": name,
                        "description": f"Variant v{variant} of {slot} {reason}.",
                        "status": DirectionStatus.FAILED.value,
                    }
                )
                memories.append(
                    {
                        "type": "Failure",
                        "title": f"Avoid variant v{variant} for {slot}",
                        "description": f"v{variant} of {slot} {reason}.",
                        "content": f"Switching {slot} to v{variant} made the step regress; keep the parent's variant.",
                    }
                )
        return _fenced_json(
            {
                "thought_process": f"Changed components: {', '.join(changed)}.",
                "new_direction_items": directions,
                "new_memory_items": memories,
            }
        )

    return respond


def _compress(inputs: Mapping[str, Any], landscape: MockLandscape, rng: np.random.Generator, settings: MockSettings) -> str:
    source: LocalMemory = inputs["local_memory"]
    memory = LocalMemory(
        direction_board=list(source.direction_board),
        experience_library=list(source.experience_library),
    )
    memory.merge_duplicates()
    failed = [d for d in memory.direction_board if d.status is DirectionStatus.FAILED]
    others = [d for d in memory.direction_board if d.status is not DirectionStatus.FAILED]
    kept_directions = failed + others[-KEEP_SUCCESS_DIRECTIONS:]
    kept_directions.sort(key=memory.direction_board.index)

    by_title: Dict[str, Any] = {}
    for item in memory.experience_library:
        by_title.pop(item.title, None)
        by_title[item.title] = item
    kept_experiences = list(by_title.values())[-KEEP_EXPERIENCES:]

    return _fenced_json(
        {
            "thought_process": "Merged duplicate directions and kept the newest experiences.",
            "direction_board": [d.to_dict() for d in kept_directions],
            "experience_library": [e.to_dict() for e in kept_experiences],
        }
    )


def _queries(inputs: Mapping[str, Any], landscape: MockLandscape, rng: np.random.Generator, settings: MockSettings) -> str:
    task: TaskSpec = inputs["task"]
    ctx = inputs["ctx"]
    n = int(inputs.get("n", 3))
    first_line = " ".join(task.statement.split())[:80]
    queries = [
        f"In {task.language.value}, how to lower the memory-time integral when: {first_line}",
        "How to combine the cheapest components of two correct solutions",
    ]
    failed = sorted(failed_directions(ctx.local_memory_render))
    if failed:
        queries.append(
            "Which replacements avoid " + ", ".join(f"{s}=v{v}" for s, v in failed[:3])
        )
    else:
        queries.append("Reducing resident memory held during a long busy loop")
    return _fenced_json({"thought_process": "Focus on component cost.", "queries": queries[:n]})


def _distill(inputs: Mapping[str, Any], landscape: MockLandscape, rng: np.random.Generator, settings: MockSettings) -> str:
    best: Candidate = inputs["best"]
    improvements: Sequence[Tuple[StepRecord, Candidate]] = inputs["improvements"]
    regressions: Sequence[Tuple[StepRecord, Candidate]] = inputs["regressions"]
    best_assignment = read_assignment(best.code) or {}
    mix = ", ".join(f"{s}=v{v}" for s, v in best_assignment.items()) or "unknown"

    experiences = [
        {
            "type": "Success",
            "title": "Keep the cheapest passing variant in every component",
            "description": f"Best mix found: {mix}.",
            "content": "Components contribute independently to the integral; optimizing them one at a time converges.",
        }
    ]
    for step, _ in list(improvements)[:2]:
        experiences.append(
            {
                "type": "Success",
                "title": f"{step.operator.value.capitalize()} that lowered the integral",
                "description": f"Step {step.iteration} improved reward by {step.delta:+.6f}.",
                "content": f"A {step.operator.value} step replaced costly components with cheaper ones.",
            }
        )
    for step, child in list(regressions)[:2]:
        assignment = read_assignment(child.code) or {}
        bad = [f"{s}=v{v}" for s, v in assignment.items() if landscape.valid(assignment) and landscape.is_bug(s, v)]
        experiences.append(
            {
                "type": "Failure",
                "title": "Avoid " + (", ".join(bad) if bad else f"the {step.operator.value} at step {step.iteration}"),
                "description": f"Step {step.iteration} changed reward by {step.delta:+.6f}.",
                "content": "The change introduced a failing or more expensive component.",
            }
        )
    return _fenced_json({"thought_process": "Contrast of improving and regressing steps.", "experiences": experiences[:5]})


RESPONDERS: Dict[str, Callable[..., str]] = {
    "plan_strategies": _plan,
    "implement": _implement,
    "direct": _implement,
    "refine": _refine,
    "crossover": _crossover,
    "diagnose": _diagnose,
    "reflect_success": _reflect(True),
    "reflect_failure": _reflect(False),
    "compress": _compress,
    "queries": _queries,
    "distill": _distill,
}


def mock_generate(
    op: str,
    inputs: Mapping[str, Any],
    landscape: MockLandscape,
    rng: np.random.Generator,
    settings: Optional[MockSettings] = None,
) -> str:
    """
    Scripted response text for one generator capability.

    Raises:
        ValidationError: For an unknown operation name
    """
    try:
        responder = RESPONDERS[op]
    except KeyError as e:
        raise ValidationError(f"Mock backend has no response for '{op}'") from e
    return responder(inputs, landscape, rng, settings or MockSettings())


class MockBackend:
    """
    Deterministic completion backend. Each task gets its own landscape and
    RNG stream, both derived from the seed and the task id.
    """

    name = "mock"

    def __init__(
        self,
        settings: MockSettings,
        seed: int = 0,
        landscapes: Optional[Mapping[str, MockLandscape]] = None,
    ) -> None:
        self.settings = settings
        self.seed = seed
        self._landscapes: Dict[str, MockLandscape] = dict(landscapes or {})
        self._rngs: Dict[str, np.random.Generator] = {}
        self._lock = threading.Lock()
        logger.info("MockBackend initialized", extra={"seed": seed})

    def landscape_for(self, task_id: str) -> MockLandscape:
        with self._lock:
            if task_id not in self._landscapes:
                self._landscapes[task_id] = MockLandscape.generate(
                    derive_seed(self.seed, task_id, "landscape"),
                    self.settings.n_slots,
                    self.settings.n_variants,
                    self.settings.bug_slots,
                )
            return self._landscapes[task_id]

    def _rng_for(self, task_id: str) -> np.random.Generator:
        with self._lock:
            if task_id not in self._rngs:
                self._rngs[task_id] = np.random.default_rng(derive_seed(self.seed, task_id, "mock"))
            return self._rngs[task_id]

    def complete(self, request: CompletionRequest) -> str:
        task: TaskSpec = request.inputs["task"]
        return mock_generate(
            request.op,
            request.inputs,
            self.landscape_for(task.task_id),
            self._rng_for(task.task_id),
            self.settings,
        )


class LandscapeEvaluator:
    """
    Scores stub programs directly from the landscape, bypassing the sandbox.

    A passing program's integral is its landscape cost; it holds ``hold_mb``
    for cost / hold_mb seconds.
    """

    def __init__(self, backend: MockBackend, repeats: int = 5) -> None:
        self.backend = backend
        self.repeats = repeats

    def measure(self, code: str, task: TaskSpec) -> EvalOutcome:
        landscape = self.backend.landscape_for(task.task_id)
        assignment = read_assignment(code)
        if not landscape.valid(assignment):
            return EvalOutcome.failure(EvalStatus.COMPILE_ERROR, "unrecognized program")
        assert assignment is not None

        hold = self.backend.settings.hold_mb
        n = len(task.tests)
        if not landscape.passes(assignment):
            failing = TestResult(test_index=0, status=EvalStatus.WRONG_ANSWER, peak=hold * MB)
            return EvalOutcome.from_tests([failing])

        cost = landscape.program_cost(assignment)
        per_test = [
            TestResult(
                test_index=i,
                status=EvalStatus.PASSED,
                time=cost / hold / n,
                peak=hold * MB,
                integral=cost / n,
            )
            for i in range(n)
        ]
        return EvalOutcome(
            status=EvalStatus.PASSED,
            exec_time=cost / hold,
            peak_memory=hold * MB,
            integral=cost,
            per_test=per_test,
            runs_used=self.repeats,
        )


def synthetic_task(
    task_id: str,
    n_tests: int = 3,
    seed: int = 0,
    language: Language = Language.PYTHON,
    reference: Optional[ReferenceStats] = None,
) -> TaskSpec:
    """Echo task: the expected output of every test is its input."""
    rng = np.random.default_rng(derive_seed(seed, task_id, "task"))
    tests = []
    for _ in range(n_tests):
        rows = int(rng.integers(1, 6))
        lines = [" ".join(str(int(x)) for x in rng.integers(0, 1000, size=4)) for _ in range(rows)]
        payload = ("\n".join(lines) + "\n").encode()
        tests.append(TestCase(input=payload, expected_output=payload, comparison=Comparison.TOKEN_WISE))
    return TaskSpec(
        task_id=task_id,
        statement=(
            "Read the whole standard input and write it back unchanged.\n"
            "Input: a few lines of integers. Output: the same lines."
        ),
        language=language,
        tests=tests,
        time_limit=10.0,
        reference=reference or ReferenceStats(exec_time=1.0, peak_memory=64.0 * MB, integral=200.0),
        metadata={"synthetic": True},
    )
