"""
SecureKeyStorage for the evoctl evolution engine

Resolves the LLM API key. The environment variable named in
``[LLM] api_key_env`` wins; otherwise the OS keyring is consulted when the
keyring package is available.
"""

import logging
import os
from typing import Any, Optional

logger = logging.getLogger(__name__)


class SecureKeyStorage:
    """
    Looks up the chat endpoint API key, using keyring when available.
    """

    SERVICE_NAME = "evoctl"
    USERNAME = "api_key"

    def __init__(self, config_manager: Any) -> None:
        """
        Initialize the SecureKeyStorage.

        Args:
            config_manager: ConfigurationManager instance for accessing configuration
        """
        self.env_var = config_manager.get("LLM", "api_key_env", fallback="EVOCTL_API_KEY")

        self.use_keyring = False
        try:
            import keyring

            self.keyring = keyring
            self.use_keyring = True
        except ImportError:
            logger.warning("Keyring not available, API key must come from environment")

    def load_key(self) -> Optional[str]:
        """
        Load the API key.

        Returns:
            Optional[str]: The key, or None when neither source has one
        """
        key = os.environ.get(self.env_var or "EVOCTL_API_KEY")
        if key:
            return key

        if self.use_keyring:
            try:
                key = self.keyring.get_password(self.SERVICE_NAME, self.USERNAME)
            except Exception as e:
                logger.error(f"Failed to read API key from keyring: {e}")
                return None
            if key:
                logger.info("API key loaded from keyring")
            return key

        return None

