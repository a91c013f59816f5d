"""
Unit tests for ChatCompletionBackend

The HTTP session is a MagicMock; no request leaves the process.
"""

import json
import unittest
from pathlib import Path
from tempfile import TemporaryDirectory
from typing import Any
from unittest.mock import MagicMock, patch

import requests

from evoctl.services.generator import CompletionRequest
from evoctl.services.llm_backend import ChatCompletionBackend
from evoctl.services.prompt_templates import RenderedPrompt
from evoctl.util.exceptions import ConfigError, RateLimited, TransportError

API_KEY = "sk-test-0123456789"


def _response(status: int, content: Any = "hello") -> MagicMock:
    response = MagicMock()
    response.status_code = status
    response.json.return_value = {"choices": [{"message": {"content": content}}]}
    if 400 <= status < 500 and status != 429:
        response.raise_for_status.side_effect = requests.exceptions.HTTPError(
            f"{status} Client Error for url with key {API_KEY}"
        )
    return response


class TestChatCompletionBackend(unittest.TestCase):
    """Test cases for ChatCompletionBackend"""

    def setUp(self) -> None:
        self.config = MagicMock()
        self.config.get.side_effect = lambda section, key, fallback=None: {
            "api_base_url": "https://llm.example/v1/",
            "model_name": "test-model",
        }.get(key, fallback)
        self.config.getint.side_effect = lambda section, key, fallback=None: {
            "max_retries": 3,
            "max_in_flight": 2,
            "request_timeout_sec": 30,
        }.get(key, fallback)
        self.config.getfloat.return_value = 0.5
        self.session = MagicMock()
        self.request = CompletionRequest(
            op="direct",
            prompt=RenderedPrompt(system="sys", user="user"),
            temperature=0.7,
            max_tokens=128,
        )
        self.tmp = TemporaryDirectory()
        self.log_path = Path(self.tmp.name) / "llm_log.jsonl"
        self.backend = ChatCompletionBackend(
            self.config, API_KEY, log_path=self.log_path, session=self.session
        )

    def tearDown(self) -> None:
        self.tmp.cleanup()

    def test_missing_key_is_config_error(self) -> None:
        """An empty API key is rejected before any request"""
        with self.assertRaises(ConfigError):
            ChatCompletionBackend(self.config, "", session=self.session)

    def test_success_posts_chat_payload(self) -> None:
        self.session.post.return_value = _response(200, "answer")
        self.assertEqual(self.backend.complete(self.request), "answer")

        args, kwargs = self.session.post.call_args
        self.assertEqual(args[0], "https://llm.example/v1/chat/completions")
        self.assertEqual(kwargs["json"]["model"], "test-model")
        self.assertEqual(kwargs["json"]["temperature"], 0.7)
        self.assertEqual(kwargs["json"]["messages"][0], {"role": "system", "content": "sys"})
        self.assertEqual(kwargs["timeout"], 30)

    @patch("evoctl.services.llm_backend.time.sleep")
    def test_server_errors_are_retried_with_backoff(self, mock_sleep: MagicMock) -> None:
        self.session.post.side_effect = [_response(503), _response(500), _response(200, "ok")]
        self.assertEqual(self.backend.complete(self.request), "ok")
        self.assertEqual([c.args[0] for c in mock_sleep.call_args_list], [0.5, 1.0])

    @patch("evoctl.services.llm_backend.time.sleep")
    def test_rate_limit_exhaustion(self, mock_sleep: MagicMock) -> None:
        self.session.post.return_value = _response(429)
        with self.assertRaises(RateLimited):
            self.backend.complete(self.request)
        self.assertEqual(self.session.post.call_count, 3)

    @patch("evoctl.services.llm_backend.time.sleep")
    def test_timeouts_become_transport_error(self, mock_sleep: MagicMock) -> None:
        self.session.post.side_effect = requests.exceptions.Timeout()
        with self.assertRaises(TransportError) as ctx:
            self.backend.complete(self.request)
        self.assertNotIsInstance(ctx.exception, RateLimited)
        self.assertIn("timeout", ctx.exception.message)

    def test_client_error_is_not_retried_and_key_redacted(self) -> None:
        self.session.post.return_value = _response(401)
        with self.assertRaises(TransportError) as ctx:
            self.backend.complete(self.request)
        self.assertEqual(self.session.post.call_count, 1)
        self.assertNotIn(API_KEY, ctx.exception.message)

    def test_malformed_payload(self) -> None:
        response = _response(200)
        response.json.return_value = {"choices": []}
        self.session.post.return_value = response
        with self.assertRaises(TransportError):
            self.backend.complete(self.request)

    def test_exchange_log_never_contains_key(self) -> None:
        self.session.post.return_value = _response(200, f"echoing {API_KEY}")
        self.backend.complete(self.request)
        text = self.log_path.read_text(encoding="utf-8")
        self.assertNotIn(API_KEY, text)
        entry = json.loads(text.splitlines()[0])
        self.assertEqual(entry["op"], "direct")
        self.assertEqual(entry["response"], "echoing ***")
