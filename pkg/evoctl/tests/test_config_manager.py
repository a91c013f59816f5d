"""
Unit tests for ConfigurationManager
"""

import os
import unittest
from pathlib import Path
from tempfile import TemporaryDirectory
from unittest.mock import patch

from evoctl.util.config_manager import ConfigurationManager
from evoctl.util.exceptions import ConfigError

INI = """\
[Engine]
iterations = 12

[LLM]
model_name = local-model
api_key = should-never-leak
api_key_env = MY_KEY
"""


class TestConfigurationManager(unittest.TestCase):
    """Test cases for ConfigurationManager"""

    def setUp(self) -> None:
        self.tmp = TemporaryDirectory()
        self.path = Path(self.tmp.name) / "config.ini"
        self.path.write_text(INI, encoding="utf-8")

    def tearDown(self) -> None:
        self.tmp.cleanup()

    def test_file_values_override_defaults(self) -> None:
        config = ConfigurationManager(str(self.path))
        self.assertEqual(config.getint("Engine", "iterations"), 12)
        self.assertEqual(config.getint("Engine", "n_init"), 5)
        self.assertEqual(config.get("LLM", "model_name"), "local-model")

    @patch.dict(os.environ, {"EVOCTL_ENGINE_ITERATIONS": "7", "EVOCTL_RUN_BACKEND": "mock"})
    def test_environment_overrides_file(self) -> None:
        """EVOCTL_SECTION_KEY wins over the INI file"""
        config = ConfigurationManager(str(self.path))
        self.assertEqual(config.getint("Engine", "iterations"), 7)
        self.assertEqual(config.get("Run", "backend"), "mock")

    def test_missing_explicit_file(self) -> None:
        with self.assertRaises(ConfigError):
            ConfigurationManager(str(Path(self.tmp.name) / "absent.ini"))

    def test_typed_getters(self) -> None:
        config = ConfigurationManager(str(self.path))
        self.assertEqual(config.getfloat("Sandbox", "sample_period_sec"), 0.001)
        self.assertTrue(config.getboolean("Engine", "use_genetic"))
        self.assertEqual(config.getint("Nope", "missing", fallback=3), 3)
        self.assertIn("heapq", config.getlist("Generator", "allowed_imports_python"))

    def test_malformed_number(self) -> None:
        config = ConfigurationManager(str(self.path))
        config.set("Engine", "iterations", "many")
        with self.assertRaises(ConfigError):
            config.getint("Engine", "iterations")

    def test_snapshot_hides_secrets(self) -> None:
        snapshot = ConfigurationManager(str(self.path)).snapshot()
        self.assertNotIn("api_key", snapshot["LLM"])
        self.assertEqual(snapshot["LLM"]["api_key_env"], "MY_KEY")
        self.assertNotIn("should-never-leak", repr(snapshot))
        self.assertEqual(snapshot["Engine"]["iterations"], "12")
