"""
Prompt templates for the generator

Templates live as editable text files in ``evoctl/prompts/``, one per prompt,
with ``{placeholder}`` markers. A file starts with ``# key: value`` metadata
lines, followed by a ``[system]`` section and a ``[user]`` section.
"""

import hashlib
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, FrozenSet, Mapping, Optional, Tuple

from ..util.exceptions import ConfigError, MissingPlaceholder, NotFoundError

logger = logging.getLogger(__name__)

DEFAULT_PROMPTS_DIR = Path(__file__).resolve().parent.parent / "prompts"
PLACEHOLDER = re.compile(r"\{([a-z_][a-z0-9_]*)\}")

TEMPLATE_NAMES = (
    "planning",
    "implement",
    "direct",
    "decomposition",
    "mutation",
    "crossover",
    "reflect_success",
    "reflect_failure",
    "compress",
    "queries",
    "global_extract",
)


@dataclass(frozen=True)
class RenderedPrompt:
    system: str
    user: str


@dataclass(frozen=True)
class PromptTemplate:
    """
    A system/user prompt pair.

    Attributes:
        name (str): Template name, equal to the file stem
        system_text (str): System prompt with placeholders
        user_text (str): User prompt with placeholders
        expected_response (str): ``json_schema(<name>)`` or
            ``markdown_with_code_block``
    """

    name: str
    system_text: str
    user_text: str
    expected_response: str

    @property
    def placeholders(self) -> FrozenSet[str]:
        return frozenset(PLACEHOLDER.findall(self.system_text)) | frozenset(
            PLACEHOLDER.findall(self.user_text)
        )

    def render(self, context: Mapping[str, Any]) -> RenderedPrompt:
        """
        Substitute every placeholder in a single pass.

        Values are inserted verbatim, so braces inside substituted text (code,
        JSON) are never treated as placeholders.

        Raises:
            MissingPlaceholder: Naming the first absent key
        """
        for key in sorted(self.placeholders):
            if key not in context:
                raise MissingPlaceholder(self.name, key)

        def substitute(match: "re.Match[str]") -> str:
            return str(context[match.group(1)])

        return RenderedPrompt(
            system=PLACEHOLDER.sub(substitute, self.system_text),
            user=PLACEHOLDER.sub(substitute, self.user_text),
        )

    @classmethod
    def parse(cls, name: str, text: str) -> "PromptTemplate":
        """
        Parse the on-disk template format.

        Raises:
            ConfigError: If the [system] or [user] section is missing
        """
        metadata: Dict[str, str] = {}
        sections: Dict[str, list] = {}
        current: Optional[str] = None
        for line in text.splitlines():
            stripped = line.strip()
            if current is None and stripped.startswith("# ") and ":" in stripped:
                key, _, value = stripped[2:].partition(":")
                metadata[key.strip()] = value.strip()
                continue
            if stripped in ("[system]", "[user]"):
                current = stripped[1:-1]
                sections[current] = []
                continue
            if current is not None:
                sections[current].append(line)

        if "system" not in sections or "user" not in sections:
            raise ConfigError(f"Prompt template '{name}' needs [system] and [user] sections")
        return cls(
            name=metadata.get("name", name),
            system_text="\n".join(sections["system"]).strip("\n"),
            user_text="\n".join(sections["user"]).strip("\n"),
            expected_response=metadata.get("expected_response", "markdown_with_code_block"),
        )


class PromptLibrary:
    """Loads and caches the prompt templates of one prompts directory."""

    def __init__(self, prompts_dir: Optional[Path] = None) -> None:
        self.prompts_dir = Path(prompts_dir) if prompts_dir else DEFAULT_PROMPTS_DIR
        if not self.prompts_dir.is_dir():
            raise NotFoundError(f"Prompts directory not found: {self.prompts_dir}")
        self._templates: Dict[str, PromptTemplate] = {}
        for name in TEMPLATE_NAMES:
            self._templates[name] = self._load(name)
        logger.info(
            f"Loaded {len(self._templates)} prompt templates",
            extra={"prompts_dir": str(self.prompts_dir)},
        )

    def _load(self, name: str) -> PromptTemplate:
        path = self.prompts_dir / f"{name}.txt"
        if not path.exists():
            raise NotFoundError(f"Prompt template file missing: {path}")
        return PromptTemplate.parse(name, path.read_text(encoding="utf-8"))

    def get(self, name: str) -> PromptTemplate:
        try:
            return self._templates[name]
        except KeyError as e:
            raise NotFoundError(f"Unknown prompt template '{name}'") from e

    def render(self, name: str, context: Mapping[str, Any]) -> RenderedPrompt:
        return self.get(name).render(context)

    def content_hash(self) -> str:
        """sha256 over template files in name order, recorded in run manifests."""
        digest = hashlib.sha256()
        for name in TEMPLATE_NAMES:
            digest.update(name.encode())
            digest.update((self.prompts_dir / f"{name}.txt").read_bytes())
        return digest.hexdigest()

    def names(self) -> Tuple[str, ...]:
        return TEMPLATE_NAMES
