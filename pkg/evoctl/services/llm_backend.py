"""
ChatCompletionBackend for the evoctl generator

This backend sends rendered prompts to an OpenAI-compatible
``/chat/completions`` endpoint. Raw exchanges are appended to
``llm_log.jsonl`` with the API key redacted.
"""

import json
import logging
import threading
import time
from pathlib import Path
from typing import Any, Dict, Optional

import requests

from ..util.exceptions import ConfigError, RateLimited, TransportError
from .generator import CompletionRequest

logger = logging.getLogger(__name__)

REDACTED = "***"


class ChatCompletionBackend:
    """
    Backend responsible for talking to the chat-completion endpoint.

    Safe to call from concurrent task loops; at most ``max_in_flight``
    requests are outstanding at once.
    """

    name = "llm"

    def __init__(
        self,
        config_manager: Any,
        api_key: str,
        log_path: Optional[Path] = None,
        session: Optional[requests.Session] = None,
    ) -> None:
        """
        Initialize the ChatCompletionBackend.

        Args:
            config_manager: ConfigurationManager instance for accessing configuration
            api_key (str): Bearer token for the endpoint
            log_path (Optional[Path]): Where raw exchanges are appended
            session (Optional[requests.Session]): Injected HTTP session

        Raises:
            ConfigError: If required configuration is missing
        """
        if not api_key:
            raise ConfigError(
                "No LLM API key available; set the environment variable named by "
                "[LLM] api_key_env or store one in the keyring",
            )
        self.api_base_url = (config_manager.get("LLM", "api_base_url") or "").rstrip("/")
        self.model_name = config_manager.get("LLM", "model_name")
        if not self.api_base_url or not self.model_name:
            raise ConfigError("[LLM] api_base_url and model_name are required")

        self.request_timeout = config_manager.getint("LLM", "request_timeout_sec", fallback=120)
        self.max_retries = config_manager.getint("LLM", "max_retries", fallback=5)
        self.retry_delay = config_manager.getfloat("LLM", "retry_delay_sec", fallback=1.0)
        max_in_flight = config_manager.getint("LLM", "max_in_flight", fallback=4)
        if self.max_retries < 1 or max_in_flight < 1:
            raise ConfigError("[LLM] max_retries and max_in_flight must be at least 1")

        self._api_key = api_key
        self._session = session or requests.Session()
        self._in_flight = threading.BoundedSemaphore(max_in_flight)
        self._log_lock = threading.Lock()
        self.log_path = log_path

        logger.info(f"ChatCompletionBackend initialized with model: {self.model_name}")
        logger.info(
            f"Retry settings: max_retries={self.max_retries}, "
            f"retry_delay={self.retry_delay}s, max_in_flight={max_in_flight}",
        )

    def _redact(self, text: str) -> str:
        return text.replace(self._api_key, REDACTED) if self._api_key else text

    def _log_exchange(self, entry: Dict[str, Any]) -> None:
        if self.log_path is None:
            return
        line = self._redact(json.dumps(entry, ensure_ascii=False))
        with self._log_lock:
            with open(self.log_path, "a", encoding="utf-8") as f:
                f.write(line + "\n")

    def complete(self, request: CompletionRequest) -> str:
        """
        Run one chat completion with exponential backoff.

        Returns:
            str: The assistant message content

        Raises:
            RateLimited: If the endpoint still answers 429 after all retries
            TransportError: On unreachable endpoints, repeated server errors
                or client errors
        """
        url = f"{self.api_base_url}/chat/completions"
        payload = {
            "model": self.model_name,
            "messages": [
                {"role": "system", "content": request.prompt.system},
                {"role": "user", "content": request.prompt.user},
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        headers = {"Authorization": f"Bearer {self._api_key}"}

        rate_limited = False
        last_error = ""
        for attempt in range(1, self.max_retries + 1):
            try:
                logger.debug(
                    f"Sending {request.op} request (attempt {attempt}/{self.max_retries})",
                )
                with self._in_flight:
                    response = self._session.post(
                        url,
                        json=payload,
                        headers=headers,
                        timeout=self.request_timeout,
                    )

                if response.status_code == 429:
                    rate_limited = True
                    last_error = "HTTP 429"
                    logger.warning(
                        f"Rate limited on {request.op} (attempt {attempt}/{self.max_retries})",
                    )
                elif response.status_code >= 500:
                    rate_limited = False
                    last_error = f"HTTP {response.status_code}"
                    logger.warning(
                        f"Server error {response.status_code} on {request.op} "
                        f"(attempt {attempt}/{self.max_retries})",
                    )
                else:
                    response.raise_for_status()
                    data = response.json()
                    text = data["choices"][0]["message"]["content"] or ""
                    self._log_exchange(
                        {
                            "op": request.op,
                            "attempt": request.attempt,
                            "http_attempt": attempt,
                            "model": self.model_name,
                            "temperature": request.temperature,
                            "messages": payload["messages"],
                            "response": text,
                        },
                    )
                    return text

            except requests.exceptions.HTTPError as e:
                # Client errors other than 429 do not improve with retries
                message = self._redact(f"Endpoint rejected {request.op} request: {e}")
                logger.error(message)
                raise TransportError(message) from e
            except (KeyError, IndexError, TypeError, ValueError) as e:
                message = f"Malformed completion payload for {request.op}: {e}"
                logger.error(message)
                raise TransportError(message) from e
            except requests.exceptions.Timeout:
                rate_limited = False
                last_error = "timeout"
                logger.warning(
                    f"Request timed out after {self.request_timeout}s "
                    f"(attempt {attempt}/{self.max_retries})",
                )
            except requests.exceptions.RequestException as e:
                rate_limited = False
                last_error = self._redact(str(e))
                logger.warning(
                    f"Could not reach endpoint (attempt {attempt}/{self.max_retries}): "
                    f"{last_error}",
                )

            if attempt < self.max_retries:
                time.sleep(self.retry_delay * (2 ** (attempt - 1)))

        self._log_exchange(
            {"op": request.op, "attempt": request.attempt, "error": last_error},
        )
        if rate_limited:
            raise RateLimited(
                f"{request.op} still rate limited after {self.max_retries} attempts",
                details={"op": request.op},
            )
        raise TransportError(
            f"{request.op} failed after {self.max_retries} attempts: {last_error}",
            details={"op": request.op},
        )
