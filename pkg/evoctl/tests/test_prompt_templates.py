"""
Unit tests for prompt template loading and rendering
"""

import shutil
from pathlib import Path

import pytest

from evoctl.services.prompt_templates import (
    DEFAULT_PROMPTS_DIR,
    TEMPLATE_NAMES,
    PromptLibrary,
    PromptTemplate,
)
from evoctl.util.exceptions import ConfigError, MissingPlaceholder, NotFoundError

SAMPLE = """\
# name: sample
# expected_response: json_schema(sample)
[system]
Optimize for {optimization_target}.
[user]
Problem:
{problem_description}
Literal JSON stays: {"key": 1}
"""


class TestPromptTemplate:
    def test_parse_metadata_and_sections(self) -> None:
        template = PromptTemplate.parse("sample", SAMPLE)
        assert template.expected_response == "json_schema(sample)"
        assert template.placeholders == frozenset({"optimization_target", "problem_description"})
        assert template.system_text == "Optimize for {optimization_target}."

    def test_render_is_single_pass(self) -> None:
        template = PromptTemplate.parse("sample", SAMPLE)
        rendered = template.render(
            {"optimization_target": "{problem_description}", "problem_description": "echo {x}"}
        )
        assert rendered.system == "Optimize for {problem_description}."
        assert "echo {x}" in rendered.user
        assert '{"key": 1}' in rendered.user

    def test_missing_placeholder_names_key(self) -> None:
        template = PromptTemplate.parse("sample", SAMPLE)
        with pytest.raises(MissingPlaceholder) as exc:
            template.render({"optimization_target": "speed"})
        assert exc.value.key == "problem_description"

    def test_sections_required(self) -> None:
        with pytest.raises(ConfigError):
            PromptTemplate.parse("broken", "# name: broken\n[system]\nonly a system prompt\n")


class TestPromptLibrary:
    def test_loads_every_template(self) -> None:
        library = PromptLibrary()
        assert library.names() == TEMPLATE_NAMES
        for name in TEMPLATE_NAMES:
            template = library.get(name)
            assert template.name == name
            assert template.system_text and template.user_text

    def test_unknown_template(self) -> None:
        with pytest.raises(NotFoundError):
            PromptLibrary().get("poetry")

    def test_missing_directory(self, tmp_path: Path) -> None:
        with pytest.raises(NotFoundError):
            PromptLibrary(tmp_path / "nope")

    def test_missing_file(self, tmp_path: Path) -> None:
        prompts = tmp_path / "prompts"
        shutil.copytree(DEFAULT_PROMPTS_DIR, prompts)
        (prompts / "queries.txt").unlink()
        with pytest.raises(NotFoundError):
            PromptLibrary(prompts)

    def test_content_hash_tracks_edits(self, tmp_path: Path) -> None:
        prompts = tmp_path / "prompts"
        shutil.copytree(DEFAULT_PROMPTS_DIR, prompts)
        original = PromptLibrary(prompts).content_hash()
        assert original == PromptLibrary().content_hash()

        path = prompts / "mutation.txt"
        path.write_text(path.read_text(encoding="utf-8") + "\nBe brief.\n", encoding="utf-8")
        assert PromptLibrary(prompts).content_hash() != original
