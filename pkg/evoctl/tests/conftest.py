"""Shared fixtures: an offline mock toolchain and synthetic task bundles."""

from dataclasses import dataclass
from pathlib import Path
from typing import Any, List, Optional

import pytest

from evoctl.models.task_models import TaskSpec
from evoctl.services.evolution_engine import EngineConfig, EvolutionEngine
from evoctl.services.generator import Generator, GeneratorSettings
from evoctl.services.global_store import GlobalStore, HashEmbedder
from evoctl.services.mock_generator import (
    LandscapeEvaluator,
    MockBackend,
    MockLandscape,
    MockSettings,
    synthetic_task,
)
from evoctl.services.prompt_templates import PromptLibrary
from evoctl.services.task_bundles import write_task_bundle
from evoctl.util.clock import FrozenClock
from evoctl.util.config_manager import ConfigurationManager

TEST_CONFIG = """\
[Engine]
iterations = 30
n_init = 5
seed = 0

[Run]
backend = mock
jobs = 1

[Embedding]
backend = hash
dimension = 64

[App]
log_level = WARNING
log_file =
"""


@dataclass
class MockRig:
    backend: MockBackend
    generator: Generator
    evaluator: LandscapeEvaluator
    store: Optional[GlobalStore]
    engine: EvolutionEngine


def make_rig(
    store_dir: Optional[Path] = None,
    seed: int = 0,
    landscape: Optional[MockLandscape] = None,
    task_id: str = "echo-000",
    **engine_overrides: Any,
) -> MockRig:
    """Mock backend, landscape evaluator, generator and engine wired together."""
    landscapes = {task_id: landscape} if landscape is not None else None
    backend = MockBackend(MockSettings(), seed=seed, landscapes=landscapes)
    generator = Generator(backend, PromptLibrary(), GeneratorSettings())
    evaluator = LandscapeEvaluator(backend)
    clock = FrozenClock()
    store = GlobalStore(store_dir, HashEmbedder(64), clock) if store_dir is not None else None
    config = EngineConfig(seed=seed, **engine_overrides)
    engine = EvolutionEngine(generator, evaluator, config, store=store, clock=clock)
    return MockRig(backend, generator, evaluator, store, engine)


def make_tasks(n: int, seed: int = 0) -> List[TaskSpec]:
    return [synthetic_task(f"echo-{i:03d}", seed=seed) for i in range(n)]


@pytest.fixture
def config_file(tmp_path: Path) -> Path:
    path = tmp_path / "config.ini"
    path.write_text(TEST_CONFIG, encoding="utf-8")
    return path


@pytest.fixture
def config_manager(config_file: Path) -> ConfigurationManager:
    return ConfigurationManager(str(config_file))


@pytest.fixture
def tasks_dir(tmp_path: Path) -> Path:
    root = tmp_path / "tasks"
    for task in make_tasks(3):
        write_task_bundle(task, root)
    return root
