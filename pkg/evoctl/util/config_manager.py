"""
ConfigurationManager for the evoctl evolution engine

This utility class provides centralized access to application configuration.
Built-in defaults are loaded first, then the INI file, then environment
variable overrides.
"""

import configparser
import logging
import os
from typing import Any, Dict, Optional

from dotenv import load_dotenv

from .exceptions import ConfigError

logger = logging.getLogger(__name__)

# Built-in defaults; config.ini and EVOCTL_* variables override them.
DEFAULT_CONFIG: Dict[str, Dict[str, str]] = {
    "Engine": {
        "iterations": "30",
        "n_init": "5",
        "n_queries": "3",
        "k_retrieve": "3",
        "k_distill": "5",
        "seed": "0",
        "operator_schedule": "alternate",
        "parse_retries": "3",
        "crossover_resample": "10",
        "context_budget_chars": "24000",
        "budget_includes_init": "false",
        "use_planning": "true",
        "use_genetic": "true",
        "use_memory": "true",
    },
    "Sandbox": {
        "repeats": "5",
        "sample_period_sec": "0.001",
        "max_concurrent": "1",
        "python_executable": "",
        "cpp_compiler": "g++",
        "cpp_flags": "-O2 -std=c++17",
        "compile_timeout_sec": "60",
    },
    "Metrics": {
        "clip_k": "5",
    },
    "Memory": {
        "compress_threshold_tokens": "1000",
        "store_dir": "",
        "preload_store": "false",
    },
    "Generator": {
        "prompts_dir": "",
        "temperature_generate": "0.7",
        "temperature_parse": "0.0",
        "max_tokens": "4096",
        "allowed_imports_python": "sys, math, collections, heapq, bisect, "
        "itertools, functools, array",
        "allowed_imports_cpp": "<bits/stdc++.h>",
    },
    "LLM": {
        "api_base_url": "https://api.openai.com/v1",
        "model_name": "gpt-4o-mini",
        "api_key_env": "EVOCTL_API_KEY",
        "request_timeout_sec": "120",
        "max_retries": "5",
        "retry_delay_sec": "1",
        "max_in_flight": "4",
    },
    "Embedding": {
        "backend": "hash",
        "api_base_url": "https://api.openai.com/v1",
        "model_name": "text-embedding-3-small",
        "dimension": "256",
        "request_timeout_sec": "60",
    },
    "Mock": {
        "n_slots": "5",
        "n_variants": "8",
        "bug_slots": "2",
        "cost_scale": "0.001",
        "hold_mb": "16",
        "use_sandbox": "false",
    },
    "Run": {
        "backend": "llm",
        "jobs": "1",
    },
    "App": {
        "log_level": "INFO",
        "log_file": "",
    },
}

# Keys whose values never leave the process (manifest snapshot, logs).
SECRET_KEYS = ("api_key", "token", "secret", "password")


class ConfigurationManager:
    """
    Manages application configuration from a config.ini file.
    Provides centralized access to configuration values.
    """

    # Environment variable prefix for configuration overrides
    ENV_PREFIX = "EVOCTL_"

    def __init__(self, config_file: Optional[str] = None) -> None:
        """
        Initialize the ConfigurationManager.

        Args:
            config_file (Optional[str]): Path to the configuration file
                (default: look in standard locations)

        Raises:
            ConfigError: If an explicitly named file does not exist or
                cannot be parsed
        """
        load_dotenv(override=False)

        explicit = config_file is not None
        if config_file is None:
            # Try the following locations in order:
            # 1. Current directory
            # 2. Project root directory
            possible_locations = [
                "config.ini",
                os.path.join(os.path.dirname(__file__), "..", "..", "config.ini"),
            ]

            for location in possible_locations:
                if os.path.exists(location):
                    config_file = location
                    break

        self.config_file: Optional[str] = config_file
        self.config: configparser.ConfigParser = configparser.ConfigParser(
            interpolation=None,
        )
        self.config.read_dict(DEFAULT_CONFIG)

        if config_file and os.path.exists(config_file):
            logger.info(f"Loading configuration from {config_file}")
            try:
                self.config.read(config_file)
            except configparser.Error as e:
                raise ConfigError(
                    f"Failed to parse configuration file {config_file}: {e}",
                ) from e
        elif explicit:
            raise ConfigError(
                f"Configuration file not found: {config_file}",
                details={"path": config_file},
            )
        else:
            logger.warning("No configuration file found, using built-in defaults")

        self._apply_env_overrides()

    def _apply_env_overrides(self) -> None:
        """
        Override configuration values with environment variables.
        Environment variable naming convention: EVOCTL_SECTION_KEY (all
        uppercase). For example, [Engine] iterations could be overridden with
        EVOCTL_ENGINE_ITERATIONS.
        """
        logger.debug("Checking for environment variable overrides")

        for section in self.config.sections():
            for key in self.config[section]:
                env_var_name = f"{self.ENV_PREFIX}{section}_{key}".upper()
                env_value = os.environ.get(env_var_name)

                if env_value is not None:
                    self.config[section][key] = env_value
                    logger.info(
                        f"Configuration override from environment: "
                        f"[{section}] {key}",
                    )

    def set(self, section: str, key: str, value: Any) -> None:
        """Set a configuration value in memory (CLI flags such as --seed)."""
        if not self.config.has_section(section):
            self.config.add_section(section)
        self.config[section][key] = str(value)

    def get(
        self, section: str, key: str, fallback: Optional[Any] = None
    ) -> Optional[str]:
        """
        Get a configuration value.

        Args:
            section (str): Configuration section name
            key (str): Configuration key name
            fallback (Optional[Any]): Default value if section/key doesn't exist

        Returns:
            Optional[str]: The configuration value or fallback if not found
        """
        try:
            return self.config.get(section, key)
        except (configparser.NoSectionError, configparser.NoOptionError) as e:
            logger.warning(f"Configuration not found: [{section}] {key}. {e}")
            return fallback

    def get_section(self, section: str) -> Dict[str, str]:
        """
        Get an entire configuration section as a dictionary.

        Args:
            section (str): Configuration section name

        Returns:
            Dict[str, str]: Dictionary of key-value pairs in the section
        """
        try:
            return dict(self.config[section])
        except KeyError:
            logger.warning(f"Configuration section not found: {section}")
            return {}

    def getint(
        self, section: str, key: str, fallback: Optional[int] = None
    ) -> Optional[int]:
        """Get configuration value as integer"""
        try:
            return self.config.getint(section, key)
        except (configparser.NoSectionError, configparser.NoOptionError) as e:
            logger.warning(f"Configuration not found: [{section}] {key}. {e}")
            return fallback
        except ValueError as e:
            raise ConfigError(f"[{section}] {key} must be an integer") from e

    def getfloat(
        self, section: str, key: str, fallback: Optional[float] = None
    ) -> Optional[float]:
        """Get configuration value as float"""
        try:
            return self.config.getfloat(section, key)
        except (configparser.NoSectionError, configparser.NoOptionError) as e:
            logger.warning(f"Configuration not found: [{section}] {key}. {e}")
            return fallback
        except ValueError as e:
            raise ConfigError(f"[{section}] {key} must be a number") from e

    def getboolean(
        self, section: str, key: str, fallback: Optional[bool] = None
    ) -> Optional[bool]:
        """Get configuration value as boolean"""
        try:
            return self.config.getboolean(section, key)
        except (configparser.NoSectionError, configparser.NoOptionError) as e:
            logger.warning(f"Configuration not found: [{section}] {key}. {e}")
            return fallback
        except ValueError as e:
            raise ConfigError(f"[{section}] {key} must be a boolean") from e

    def getlist(self, section: str, key: str) -> list:
        """Get a comma-separated configuration value as a list of strings"""
        raw = self.get(section, key, fallback="") or ""
        return [item.strip() for item in raw.split(",") if item.strip()]

    def snapshot(self) -> Dict[str, Dict[str, str]]:
        """
        Return every section as plain dictionaries, with secret-looking keys
        removed, for the run manifest.
        """
        result: Dict[str, Dict[str, str]] = {}
        for section in self.config.sections():
            result[section] = {
                key: value
                for key, value in self.config[section].items()
                if not any(marker in key for marker in SECRET_KEYS)
                or key.endswith("_env")
            }
        return result
