"""
Assembly of the generator, evaluator, embedder and clock for a backend.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

from ..util.clock import FrozenClock, SystemClock
from ..util.exceptions import ConfigError
from ..util.secure_key_storage import SecureKeyStorage
from .generator import CompletionBackend, Generator, GeneratorSettings
from .global_store import Embedder, build_embedder
from .llm_backend import ChatCompletionBackend
from .mock_generator import LandscapeEvaluator, MockBackend, MockSettings
from .prompt_templates import PromptLibrary
from .sandbox_service import Evaluator, SandboxEvaluator, SandboxSettings

logger = logging.getLogger(__name__)

BACKENDS = ("llm", "mock")
LLM_LOG_FILE = "llm_log.jsonl"
CALLS_FILE = "generator_calls.jsonl"


@dataclass
class Toolchain:
    backend_name: str
    backend: CompletionBackend
    generator: Generator
    evaluator: Evaluator
    embedder: Embedder
    clock: Any
    prompts: PromptLibrary


def build_toolchain(
    config_manager: Any,
    backend_name: str,
    seed: int,
    run_dir: Optional[Path] = None,
) -> Toolchain:
    """
    Build everything a run needs for the chosen backend.

    The mock backend scores programs from its landscape unless
    ``[Mock] use_sandbox`` is set, and uses a frozen clock so repeated runs
    are byte-identical.

    Raises:
        ConfigError: For an unknown backend or a missing API key
    """
    if backend_name not in BACKENDS:
        raise ConfigError(f"Unknown backend '{backend_name}'; expected one of {BACKENDS}")

    prompts_dir = config_manager.get("Generator", "prompts_dir", fallback="") or None
    prompts = PromptLibrary(Path(prompts_dir) if prompts_dir else None)
    settings = GeneratorSettings.from_config(config_manager)
    api_key = ""

    backend: CompletionBackend
    evaluator: Evaluator
    if backend_name == "mock":
        mock = MockBackend(MockSettings.from_config(config_manager), seed=seed)
        backend = mock
        if config_manager.getboolean("Mock", "use_sandbox", fallback=False):
            evaluator = SandboxEvaluator(SandboxSettings.from_config(config_manager))
        else:
            evaluator = LandscapeEvaluator(
                mock, config_manager.getint("Sandbox", "repeats", fallback=5)
            )
        clock: Any = FrozenClock()
    else:
        api_key = SecureKeyStorage(config_manager).load_key() or ""
        backend = ChatCompletionBackend(
            config_manager,
            api_key,
            log_path=run_dir / LLM_LOG_FILE if run_dir is not None else None,
        )
        evaluator = SandboxEvaluator(SandboxSettings.from_config(config_manager))
        clock = SystemClock()

    generator = Generator(
        backend,
        prompts,
        settings,
        call_trace_path=run_dir / CALLS_FILE if run_dir is not None else None,
    )
    logger.info(f"Toolchain ready for backend: {backend_name}", extra={"seed": seed})
    return Toolchain(
        backend_name=backend_name,
        backend=backend,
        generator=generator,
        evaluator=evaluator,
        embedder=build_embedder(config_manager, api_key),
        clock=clock,
        prompts=prompts,
    )
