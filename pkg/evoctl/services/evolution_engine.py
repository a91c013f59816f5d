"""
EvolutionEngine for evoctl

This module runs the controlled self-evolution loop for one task:
diversified initialization, reward-proportional parent selection,
diagnosis-guided mutation or compositional crossover, measurement, and the
local and global memory updates around each step.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..models.candidate_models import (
    Candidate,
    DirectBaseline,
    Operator,
    Origin,
    Sketch,
    SlotDiagnosis,
    StepRecord,
)
from ..models.context_models import Context
from ..models.eval_models import EvalOutcome, EvalStatus
from ..models.memory_models import EMPTY_MEMORY, GlobalExperience, LocalMemory
from ..models.population import Population
from ..models.task_models import TaskSpec
from ..util.clock import SystemClock
from ..util.exceptions import (
    ConfigError,
    EmptyInput,
    GenerationExhausted,
    NoEvaluatedCandidate,
    NoViableParent,
    TransportError,
)
from ..util.seeding import derive_seed
from .generator import Generator
from .global_memory_service import distill_global, generate_queries
from .global_store import GlobalStore
from .local_memory_service import compress_local, reflect_local
from .metrics_service import reward_for
from .sandbox_service import Evaluator
from .trajectory_log import TrajectoryWriter

logger = logging.getLogger(__name__)

SELECTION_TOLERANCE = 1e-12
GENERIC_STRATEGY = (
    "Write a straightforward correct solution with the lowest time complexity "
    "you can find, reading input once and avoiding unnecessary copies."
)
LAST_WINDOW = 10


@dataclass(frozen=True)
class EngineConfig:
    """
    Engine hyperparameters.

    An empty ``operator_schedule`` means the alternating schedule: mutation
    on odd iterations, crossover on even ones. A custom schedule is cycled
    when it is shorter than the run.
    """

    iterations: int = 30
    n_init: int = 5
    n_queries: int = 3
    k_retrieve: int = 3
    k_distill: int = 5
    seed: int = 0
    operator_schedule: Tuple[Operator, ...] = ()
    crossover_resample: int = 10
    context_budget_chars: int = 24000
    budget_includes_init: bool = False
    compress_threshold_tokens: int = 1000
    use_planning: bool = True
    use_genetic: bool = True
    use_memory: bool = True

    def __post_init__(self) -> None:
        if self.iterations < 1:
            raise ConfigError("[Engine] iterations must be at least 1")
        for name in ("n_init", "n_queries", "k_retrieve", "k_distill"):
            if getattr(self, name) < 1:
                raise ConfigError(f"[Engine] {name} must be at least 1")
        if self.seed < 0:
            raise ConfigError("[Engine] seed must be non-negative")
        if self.crossover_resample < 0:
            raise ConfigError("[Engine] crossover_resample must be non-negative")

    @property
    def loop_iterations(self) -> int:
        """Evolution steps after initialization under the configured budget."""
        if self.budget_includes_init:
            return max(self.iterations - self.n_init, 0)
        return self.iterations

    @staticmethod
    def parse_schedule(raw: str) -> Tuple[Operator, ...]:
        raw = (raw or "").strip().lower()
        if raw in ("", "alternate"):
            return ()
        try:
            return tuple(Operator(part.strip()) for part in raw.split(",") if part.strip())
        except ValueError as e:
            raise ConfigError(f"[Engine] operator_schedule has an unknown operator: {e}") from e

    @classmethod
    def from_config(cls, config_manager: Any) -> "EngineConfig":
        return cls(
            iterations=config_manager.getint("Engine", "iterations", fallback=30),
            n_init=config_manager.getint("Engine", "n_init", fallback=5),
            n_queries=config_manager.getint("Engine", "n_queries", fallback=3),
            k_retrieve=config_manager.getint("Engine", "k_retrieve", fallback=3),
            k_distill=config_manager.getint("Engine", "k_distill", fallback=5),
            seed=config_manager.getint("Engine", "seed", fallback=0),
            operator_schedule=cls.parse_schedule(
                config_manager.get("Engine", "operator_schedule", fallback="alternate") or ""
            ),
            crossover_resample=config_manager.getint("Engine", "crossover_resample", fallback=10),
            context_budget_chars=config_manager.getint(
                "Engine", "context_budget_chars", fallback=24000
            ),
            budget_includes_init=config_manager.getboolean(
                "Engine", "budget_includes_init", fallback=False
            ),
            compress_threshold_tokens=config_manager.getint(
                "Memory", "compress_threshold_tokens", fallback=1000
            ),
            use_planning=config_manager.getboolean("Engine", "use_planning", fallback=True),
            use_genetic=config_manager.getboolean("Engine", "use_genetic", fallback=True),
            use_memory=config_manager.getboolean("Engine", "use_memory", fallback=True),
        )


def select_parent(pop: Population, rng: np.random.Generator) -> Candidate:
    """
    Sample a member with probability proportional to its reward.

    Raises:
        NoViableParent: If every member has zero reward
    """
    rewards = np.array([member.reward for member in pop.members], dtype=np.float64)
    total = float(rewards.sum()) if len(rewards) else 0.0
    if total <= 0:
        raise NoViableParent(details={"task_id": pop.task_id})
    probabilities = rewards / total
    assert abs(math.fsum(probabilities) - 1.0) <= SELECTION_TOLERANCE
    index = int(rng.choice(len(probabilities), p=probabilities))
    return pop.members[index]


def choose_operator(t: int, cfg: EngineConfig) -> Operator:
    if t < 1:
        raise ValueError(f"Iteration must be at least 1, got {t}")
    if cfg.operator_schedule:
        return cfg.operator_schedule[(t - 1) % len(cfg.operator_schedule)]
    return Operator.MUTATION if t % 2 == 1 else Operator.CROSSOVER


@dataclass
class TaskState:
    """Mutable per-task loop state."""

    task: TaskSpec
    population: Population
    rng: np.random.Generator
    local_memory: LocalMemory = field(default_factory=LocalMemory)
    writer: Optional[TrajectoryWriter] = None


@dataclass
class TaskResult:
    """Outcome of one task's evolution."""

    task: TaskSpec
    population: Population
    best: Optional[Candidate]
    fallback: bool = False
    stalled: bool = False
    iterations_run: int = 0
    experience: Optional[GlobalExperience] = None
    wall_time: float = 0.0


@dataclass(frozen=True)
class TaskDynamics:
    improvements: int
    iter_at_best: Optional[int]
    last_window_improvements: int


class EvolutionEngine:
    """
    Service that evolves candidate programs for a task.

    One engine may serve many tasks, concurrently if its evaluator and
    backend allow; each task's loop is strictly sequential.
    """

    def __init__(
        self,
        generator: Generator,
        evaluator: Evaluator,
        config: EngineConfig,
        store: Optional[GlobalStore] = None,
        clock: Any = None,
    ) -> None:
        self.generator = generator
        self.evaluator = evaluator
        self.config = config
        self.store = store
        self.clock = clock or SystemClock()
        logger.info(
            f"EvolutionEngine initialized: iterations={config.iterations}, n_init={config.n_init}",
            extra={
                "use_planning": config.use_planning,
                "use_genetic": config.use_genetic,
                "use_memory": config.use_memory,
            },
        )

    def new_state(self, task: TaskSpec, writer: Optional[TrajectoryWriter] = None) -> TaskState:
        rng = np.random.default_rng(derive_seed(self.config.seed, task.task_id, "engine"))
        return TaskState(task=task, population=Population(task_id=task.task_id), rng=rng, writer=writer)

    def _measure(self, code: str, task: TaskSpec) -> EvalOutcome:
        if not code:
            return EvalOutcome.failure(EvalStatus.COMPILE_ERROR, "no code generated")
        return self.evaluator.measure(code, task)

    def _diagnose(
        self, task: TaskSpec, candidate: Candidate, reference: Candidate
    ) -> Optional[SlotDiagnosis]:
        if not self.config.use_genetic or not candidate.passed:
            return None
        try:
            return self.generator.diagnose(task, candidate.code, reference.code)
        except (GenerationExhausted, TransportError) as e:
            logger.warning(
                f"Diagnosis unavailable: {e.message}",
                extra={"task_id": task.task_id, "candidate_id": candidate.candidate_id},
            )
            return None

    def _sketches(self, task: TaskSpec) -> List[Sketch]:
        n = self.config.n_init
        if self.config.use_planning:
            return self.generator.plan_strategies(task, n)
        return [Sketch(sketch_id=i, strategy_text=GENERIC_STRATEGY) for i in range(n)]

    def initialize(self, state: TaskState) -> Population:
        """
        Plan n_init sketches, implement and measure each, then diagnose the
        passing ones against the initial best.

        Raises:
            GenerationExhausted: If planning output stays unparseable
        """
        task, pop = state.task, state.population
        for sketch in self._sketches(task):
            error = ""
            try:
                code = self.generator.implement(task, sketch)
            except (GenerationExhausted, TransportError) as e:
                code, error = "", e.message
                logger.warning(
                    f"Sketch {sketch.sketch_id} could not be implemented: {e.message}",
                    extra={"task_id": task.task_id},
                )
            outcome = self._measure(code, task)
            pop.add(
                Candidate(
                    candidate_id=pop.next_id(),
                    code=code,
                    origin=Origin.init(sketch.sketch_id),
                    iteration=0,
                    eval=outcome,
                    reward=reward_for(outcome),
                    error=error,
                )
            )

        try:
            best: Optional[Candidate] = pop.best_candidate()
        except NoEvaluatedCandidate:
            best = None
            logger.warning("No initial candidate passed", extra={"task_id": task.task_id})

        for member in pop.members:
            if best is not None:
                member.diagnosis = self._diagnose(task, member, best)
            if state.writer is not None:
                state.writer.log_candidate(member)
            logger.info(
                f"Initial candidate {member.candidate_id}: {member.eval.status.value if member.eval else 'not_run'}",
                extra={"task_id": task.task_id, "candidate_id": member.candidate_id},
            )
        return pop

    def _second_parent(
        self, pop: Population, first: Candidate, rng: np.random.Generator
    ) -> Optional[Candidate]:
        if len(pop.viable()) < 2:
            return None
        for _ in range(self.config.crossover_resample):
            other = select_parent(pop, rng)
            if other.candidate_id != first.candidate_id:
                return other
        return None

    def _context(self, state: TaskState, t: int) -> Context:
        pop = state.population
        best = pop.best_candidate()
        best_summary = (
            best.diagnosis.summary()
            if best.diagnosis is not None
            else f"Candidate {best.candidate_id}: integral={best.integral:.4f} MB*s"
        )
        return Context(
            statement=state.task.statement,
            best_summary=best_summary,
            local_memory_render=(
                state.local_memory.render() if self.config.use_memory else EMPTY_MEMORY
            ),
            iteration=t,
        )

    def _retrieve(self, state: TaskState, ctx: Context) -> Tuple[Context, List[str], List[str]]:
        if not self.config.use_memory or self.store is None:
            return ctx, [], []
        queries = generate_queries(state.task, ctx, self.generator, self.config.n_queries)
        cap = len(queries) * self.config.k_retrieve
        retrieved = self.store.retrieve(queries, self.config.k_retrieve)[:cap]
        ctx = replace(ctx, retrieved_global=[entry.render() for entry in retrieved])
        return ctx, queries, [entry.experience_id for entry in retrieved]

    def evolve_step(self, state: TaskState, t: int) -> StepRecord:
        """
        One iteration: select, retrieve, compose, generate, measure, append,
        reflect and compress.

        Raises:
            NoViableParent: If no member has positive reward
        """
        task, pop, rng = state.task, state.population, state.rng
        started = self.clock.monotonic()

        parent = select_parent(pop, rng)
        operator = choose_operator(t, self.config) if self.config.use_genetic else Operator.MUTATION
        parents: Tuple[Candidate, ...] = (parent,)
        substituted = False
        if operator is Operator.CROSSOVER:
            other = self._second_parent(pop, parent, rng)
            if other is None:
                operator, substituted = Operator.MUTATION, True
                logger.info(
                    "Crossover degraded to mutation: no distinct second parent",
                    extra={"task_id": task.task_id, "iteration": t},
                )
            else:
                parents = (parent, other)

        ctx, queries, retrieved_ids = self._retrieve(state, self._context(state, t))
        ctx = ctx.fit(self.config.context_budget_chars)
        reference = pop.best_candidate()

        error = ""
        try:
            if operator is Operator.CROSSOVER:
                origin = Origin.crossover(parents[0].candidate_id, parents[1].candidate_id)
                code = self.generator.crossover(
                    task, parents[0], parents[1], (parents[0].diagnosis, parents[1].diagnosis), ctx
                )
            else:
                origin = Origin.mutation(parent.candidate_id)
                diagnosis = parent.diagnosis if self.config.use_genetic else None
                code = self.generator.refine(task, parent, diagnosis, ctx)
        except (GenerationExhausted, TransportError) as e:
            code, error = "", e.message
            logger.warning(
                f"Generation failed at iteration {t}: {e.message}",
                extra={"task_id": task.task_id, "iteration": t},
            )

        outcome = self._measure(code, task)
        child = Candidate(
            candidate_id=pop.next_id(),
            code=code,
            origin=origin,
            iteration=t,
            eval=outcome,
            reward=reward_for(outcome),
            error=error,
        )
        child.diagnosis = self._diagnose(task, child, reference)
        delta = child.reward - parent.reward
        pop.add(child)
        if state.writer is not None:
            state.writer.log_candidate(child)

        if self.config.use_memory:
            reflection = reflect_local(task, parents, child, delta, self.generator, state.local_memory)
            state.local_memory.absorb(reflection)
            state.local_memory = compress_local(
                task, state.local_memory, self.generator, self.config.compress_threshold_tokens
            )

        step = StepRecord(
            iteration=t,
            operator=operator,
            parent_ids=tuple(p.candidate_id for p in parents),
            child_id=child.candidate_id,
            delta=delta,
            retrieved_ids=retrieved_ids,
            wall_time=self.clock.monotonic() - started,
            queries=queries,
            substituted=substituted,
        )
        pop.add_step(step)
        if state.writer is not None:
            state.writer.log_step(step)

        logger.info(
            f"Step {t} {operator.value}: child {child.candidate_id} {outcome.status.value}, "
            f"delta={delta:+.6f}",
            extra={
                "task_id": task.task_id,
                "iteration": t,
                "candidate_id": child.candidate_id,
                "status": outcome.status.value,
            },
        )
        return step

    def evolve(
        self,
        task: TaskSpec,
        writer: Optional[TrajectoryWriter] = None,
        direct: Optional[DirectBaseline] = None,
    ) -> TaskResult:
        """
        Initialization plus the evolution loop; no global store writes.

        A loop that runs out of viable parents stops early and is marked
        stalled. Without any passing member the Direct baseline becomes the
        best candidate when one is given.
        """
        started = self.clock.monotonic()
        if writer is not None:
            writer.reset()
        state = self.new_state(task, writer)
        self.initialize(state)

        stalled = False
        iterations_run = 0
        for t in range(1, self.config.loop_iterations + 1):
            try:
                self.evolve_step(state, t)
            except NoViableParent:
                stalled = True
                logger.warning(
                    f"Evolution stalled at iteration {t}: no viable parent",
                    extra={"task_id": task.task_id, "iteration": t},
                )
                break
            iterations_run = t

        pop = state.population
        fallback = False
        best: Optional[Candidate]
        try:
            best = pop.best_candidate()
        except NoEvaluatedCandidate:
            best = None
            if direct is not None:
                best = direct.as_fallback(reward_for(direct.eval) if direct.eval else 0.0)
                fallback = True
                logger.warning(
                    "No candidate passed; falling back to the Direct solution",
                    extra={"task_id": task.task_id},
                )
            else:
                logger.error(
                    "No candidate passed and no Direct solution is available",
                    extra={"task_id": task.task_id},
                )

        return TaskResult(
            task=task,
            population=pop,
            best=best,
            fallback=fallback,
            stalled=stalled,
            iterations_run=iterations_run,
            wall_time=self.clock.monotonic() - started,
        )

    def finish(
        self,
        result: TaskResult,
        writer: Optional[TrajectoryWriter] = None,
        experience: Optional[GlobalExperience] = None,
    ) -> TaskResult:
        """
        Distill into the global store and write the summary record.

        An ``experience`` already stored for this task (a resumed run that
        stopped after distillation) is reused instead of distilling again.
        """
        if experience is not None:
            result.experience = experience
        elif self.config.use_memory and self.store is not None and result.best is not None:
            result.experience = distill_global(
                result.task,
                result.population,
                result.best,
                self.generator,
                self.store,
                self.config.k_distill,
            )
        if writer is not None:
            writer.log_summary(summary_record(result, self.config))
        return result

    def run_task(
        self,
        task: TaskSpec,
        writer: Optional[TrajectoryWriter] = None,
        direct: Optional[DirectBaseline] = None,
    ) -> TaskResult:
        return self.finish(self.evolve(task, writer, direct), writer)


def summary_record(result: TaskResult, cfg: EngineConfig) -> Dict[str, Any]:
    members = result.population.members
    init_count = sum(1 for m in members if m.iteration == 0)
    best = result.best
    return {
        "task_id": result.task.task_id,
        "best_candidate_id": best.candidate_id if best else None,
        "best_eval": best.eval.to_dict() if best and best.eval else None,
        "best_code": best.code if best and result.fallback else None,
        "fallback": result.fallback,
        "stalled": result.stalled,
        "iterations_run": result.iterations_run,
        "iterations_planned": cfg.loop_iterations,
        "budget_includes_init": cfg.budget_includes_init,
        "counts": {
            "init": init_count,
            "evolved": len(members) - init_count,
            "total": len(members),
        },
        "reference": result.task.reference.to_dict() if result.task.reference else None,
        "experience_id": result.experience.experience_id if result.experience else None,
        "wall_time": result.wall_time,
    }


def count_improvements(series: Sequence[float], after: int = 0) -> int:
    """Strict decreases of a best-so-far series at indices greater than ``after``."""
    return sum(
        1 for t in range(max(after, 0) + 1, len(series)) if series[t] < series[t - 1]
    )


def task_dynamics(pop: Population, iterations: Optional[int] = None) -> TaskDynamics:
    """
    Improvement count, iteration of the final best and improvements in the
    last ten iterations, from one finished population.
    """
    series = pop.best_so_far_series()
    total = iterations if iterations is not None else max((s.iteration for s in pop.steps), default=0)
    if len(series) < total + 1:
        last = series[-1] if series else math.inf
        series = list(series) + [last] * (total + 1 - len(series))
    try:
        iter_at_best: Optional[int] = pop.best_candidate().iteration
    except NoEvaluatedCandidate:
        iter_at_best = None
    return TaskDynamics(
        improvements=count_improvements(series),
        iter_at_best=iter_at_best,
        last_window_improvements=count_improvements(series, total - LAST_WINDOW),
    )


def dynamics_stats(
    pops: Sequence[Population], iterations: Optional[int] = None
) -> Dict[str, float]:
    """
    Task dynamics averaged over tasks. Tasks without a passing candidate are
    left out of the iteration-of-best mean.

    Raises:
        EmptyInput: If no population is given
    """
    if not pops:
        raise EmptyInput()
    stats = [task_dynamics(pop, iterations) for pop in pops]
    located = [s.iter_at_best for s in stats if s.iter_at_best is not None]
    return {
        "imp": math.fsum(s.improvements for s in stats) / len(stats),
        "iter_at_best": math.fsum(located) / len(located) if located else 0.0,
        "last10_imp": math.fsum(s.last_window_improvements for s in stats) / len(stats),
    }
