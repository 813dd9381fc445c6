from __future__ import annotations

import json

import pytest
import requests

from bpmnkit.llm import (
    ChatMessage,
    HttpChatClient,
    LlmClientConfig,
    LlmTimeout,
    LlmUnavailable,
    MockChatClient,
    SchemaFailureAfterRetries,
    complete,
    extract_json,
    parse_json_with_retry,
    system,
    user,
)

MESSAGES = [system("You are a test."), user("Say hi.")]


class TestChatMessage:
    def test_invalid_role_rejected(self):
        with pytest.raises(ValueError):
            ChatMessage("narrator", "hello")

    def test_empty_content_rejected(self):
        with pytest.raises(ValueError):
            ChatMessage("user", "")


class TestMockClient:
    def test_scripted_reply(self):
        client = MockChatClient(["hello"])
        assert complete(client, MESSAGES) == "hello"
        assert client.call_count == 1
        assert client.calls[0][0].role == "system"

    def test_script_exhaustion(self):
        client = MockChatClient([])
        with pytest.raises(LlmUnavailable):
            complete(client, MESSAGES)

    def test_from_json_file(self, tmp_path):
        path = tmp_path / "script.json"
        path.write_text(json.dumps([
            "plain string",
            {"content": "wrapped"},
            {"error": "timeout"},
        ]))
        client = MockChatClient.from_json(path)
        assert complete(client, MESSAGES) == "plain string"
        assert complete(client, MESSAGES) == "wrapped"
        with pytest.raises(LlmTimeout):
            complete(client, MESSAGES)


class _FakeResponse:
    def __init__(self, payload):
        self._payload = payload

    def raise_for_status(self):
        pass

    def json(self):
        return self._payload


class TestHttpChatClient:
    CFG = LlmClientConfig(endpoint="http://llm.invalid/v1/chat", model="test-model",
                          temperature=0.0, max_tokens=512)

    def test_posts_the_standard_chat_shape(self, monkeypatch):
        seen = {}

        def fake_post(url, json=None, timeout=None):
            seen["url"] = url
            seen["payload"] = json
            return _FakeResponse({"choices": [{"message": {"content": "pong"}}]})

        monkeypatch.setattr(requests, "post", fake_post)
        client = HttpChatClient(self.CFG)
        assert complete(client, MESSAGES) == "pong"
        assert seen["url"] == "http://llm.invalid/v1/chat"
        assert seen["payload"] == {
            "model": "test-model",
            "messages": [{"role": "system", "content": "You are a test."},
                         {"role": "user", "content": "Say hi."}],
            "temperature": 0.0,
            "max_tokens": 512,
        }

    def test_timeout_maps_to_llm_timeout(self, monkeypatch):
        def fake_post(url, json=None, timeout=None):
            raise requests.Timeout("too slow")

        monkeypatch.setattr(requests, "post", fake_post)
        with pytest.raises(LlmTimeout):
            HttpChatClient(self.CFG).complete_once(MESSAGES)

    def test_malformed_reply_maps_to_unavailable(self, monkeypatch):
        monkeypatch.setattr(requests, "post",
                            lambda url, json=None, timeout=None: _FakeResponse({"oops": 1}))
        with pytest.raises(LlmUnavailable):
            HttpChatClient(self.CFG).complete_once(MESSAGES)

    def test_requires_endpoint_and_model(self):
        with pytest.raises(ValueError):
            HttpChatClient(LlmClientConfig(endpoint="", model="m"))


class TestRetries:
    def test_two_failures_then_success(self):
        client = MockChatClient([
            LlmUnavailable("flaky"), LlmUnavailable("flaky"), "recovered",
        ])
        assert complete(client, MESSAGES, retry_count=3) == "recovered"
        assert client.call_count == 3

    def test_persistent_failure_exhausts(self):
        client = MockChatClient([LlmUnavailable("down"), LlmUnavailable("down")])
        with pytest.raises(LlmUnavailable):
            complete(client, MESSAGES, retry_count=1)
        assert client.call_count == 2

    def test_messages_must_start_with_system(self):
        client = MockChatClient(["x"])
        with pytest.raises(ValueError):
            complete(client, [user("no system prompt")])
        with pytest.raises(ValueError):
            complete(client, [])


class TestExtractJson:
    def test_fenced_block(self):
        assert extract_json('```json\n{"a": 1}\n```') == {"a": 1}

    def test_prose_wrapper(self):
        assert extract_json('Sure! Here you go: {"a": [1, 2]} Enjoy.') == {"a": [1, 2]}

    def test_array_value(self):
        assert extract_json("[1, 2, 3]") == [1, 2, 3]

    def test_first_valid_value_wins(self):
        assert extract_json("{broken then {\"ok\": true}") == {"ok": True}

    def test_no_json_raises(self):
        with pytest.raises(ValueError):
            extract_json("nothing to see here")


SCHEMA = {"type": "object", "required": ["name"],
          "properties": {"name": {"type": "string"}}}


class TestParseJsonWithRetry:
    def test_valid_first_response(self):
        client = MockChatClient([])
        payload, raw = parse_json_with_retry(client, MESSAGES, '{"name": "x"}', SCHEMA)
        assert payload == {"name": "x"}
        assert client.call_count == 0

    def test_reprompts_on_schema_violation(self):
        client = MockChatClient(['{"name": "fixed"}'])
        payload, _ = parse_json_with_retry(client, MESSAGES, '{"wrong": 1}', SCHEMA,
                                           max_retries=2)
        assert payload == {"name": "fixed"}
        assert client.call_count == 1
        retry_prompt = client.calls[0][-1].content
        assert "schema" in retry_prompt

    def test_retry_conversation_carries_bad_response(self):
        client = MockChatClient(['{"name": "ok"}'])
        parse_json_with_retry(client, MESSAGES, "garbage", SCHEMA)
        roles = [m.role for m in client.calls[0]]
        assert roles == ["system", "user", "assistant", "user"]
        assert client.calls[0][2].content == "garbage"

    def test_persistent_garbage_fails_after_attempts(self):
        client = MockChatClient(["still bad", "also bad"])
        with pytest.raises(SchemaFailureAfterRetries) as exc:
            parse_json_with_retry(client, MESSAGES, "bad", SCHEMA, max_retries=2)
        assert exc.value.attempts == 3
        assert client.call_count == 2
        assert exc.value.raw == "also bad"
