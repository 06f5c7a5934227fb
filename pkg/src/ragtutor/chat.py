"""Chat-model providers.

Two kinds share one ``complete(messages)`` contract: a remote
OpenAI-compatible endpoint, and a scripted model driven by a rule table so
offline runs and tests are fully deterministic. Scripted rules match either
the bare query (the text after the final "Question:" marker) or a regex over
the whole user message; regex responses may use backreferences (``\\g<name>``)
into the match.
"""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Protocol

from .errors import DatasetFormatError, ProviderError
from .httpapi import RetryPolicy, post_json
from .text import tokenize_spans

DEFAULT_MAX_OUTPUT_TOKENS = 512
DEFAULT_API_KEY_ENV = "RAG_PRISM_API_KEY"

_QUESTION_MARKER = "Question:"


class ChatKind(str, Enum):
    REMOTE_OPENAI_COMPATIBLE = "remote_openai_compatible"
    SCRIPTED = "scripted"


@dataclass(frozen=True)
class ScriptRule:
    """One scripted response: exact-query match or regex over the user message."""

    response: str
    query: str | None = None
    pattern: str | None = None


@dataclass
class ChatModelSpec:
    kind: ChatKind = ChatKind.SCRIPTED
    model_name: str = "scripted"
    endpoint_url: str = ""
    temperature: float = 0.0
    max_output_tokens: int = DEFAULT_MAX_OUTPUT_TOKENS
    script_path: str | None = None
    rules: list[ScriptRule] = field(default_factory=list)
    default_response: str | None = None
    api_key_env: str = DEFAULT_API_KEY_ENV
    retry: RetryPolicy = field(default_factory=RetryPolicy)

    def validate(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.kind is ChatKind.REMOTE_OPENAI_COMPATIBLE:
            if not self.endpoint_url:
                raise ValueError("remote chat spec requires endpoint_url")
            if not os.environ.get(self.api_key_env):
                raise ValueError(f"remote chat spec requires credential in ${self.api_key_env}")


class ChatModel(Protocol):
    model_id: str

    def complete(self, messages: list[dict[str, str]]) -> str: ...


def _last_user_content(messages: list[dict[str, str]]) -> str:
    for message in reversed(messages):
        if message.get("role") == "user":
            return message.get("content", "")
    return ""


def extract_query(user_content: str) -> str:
    """Pull the bare query back out of a composed user message."""
    marker_at = user_content.rfind(_QUESTION_MARKER)
    if marker_at == -1:
        return user_content.strip()
    return user_content[marker_at + len(_QUESTION_MARKER) :].strip()


class ScriptedChatModel:
    """Deterministic chat model answering from a rule table."""

    def __init__(self, rules: list[ScriptRule], default_response: str | None = None, model_id: str = "scripted"):
        self.rules = rules
        self.default_response = default_response
        self.model_id = model_id

    def complete(self, messages: list[dict[str, str]]) -> str:
        content = _last_user_content(messages)
        query = extract_query(content)
        for rule in self.rules:
            if rule.query is not None and rule.query == query:
                return rule.response
            if rule.pattern is not None:
                match = re.search(rule.pattern, content, re.DOTALL)
                if match:
                    return match.expand(rule.response)
        if self.default_response is not None:
            return self.default_response
        raise ProviderError(f"no scripted response matches query {query[:80]!r}")


class TemplateQuestionGenerator:
    """Offline question generator with the chat-model interface.

    Reads the passage back out of the generation prompt and emits a numbered
    list of questions built from evenly spaced passage snippets, so `genqa`
    works with no model at all.
    """

    model_id = "template-generator"

    def complete(self, messages: list[dict[str, str]]) -> str:
        content = _last_user_content(messages)
        passage_match = re.search(r"<<<\n(.*?)\n>>>", content, re.DOTALL)
        count_match = re.search(r"Write (\d+) question", content)
        if not passage_match or not count_match:
            raise ProviderError("generation prompt lacks passage markers or question count")
        passage = passage_match.group(1)
        n = int(count_match.group(1))

        spans = tokenize_spans(passage)
        lines = []
        for i in range(n):
            if spans:
                start_tok = (i * max(len(spans) - 1, 1) // max(n, 1)) % len(spans)
                window = spans[start_tok : start_tok + 8]
                snippet = passage[window[0][0] : window[-1][1]].replace("\n", " ")
            else:
                snippet = "this passage"
            lines.append(f"{i + 1}. What does the material say about \"{snippet}\"?")
        return "\n".join(lines)


class RemoteChatModel:
    """OpenAI-compatible chat completions client with bounded retries."""

    def __init__(self, spec: ChatModelSpec):
        spec.validate()
        self.spec = spec
        self.model_id = spec.model_name

    def complete(self, messages: list[dict[str, str]]) -> str:
        spec = self.spec
        url = spec.endpoint_url.rstrip("/") + "/v1/chat/completions"
        headers = {"Authorization": f"Bearer {os.environ[spec.api_key_env]}"}
        body = post_json(
            url,
            {
                "model": spec.model_name,
                "messages": messages,
                "temperature": spec.temperature,
                "max_tokens": spec.max_output_tokens,
            },
            headers,
            spec.retry,
        )
        try:
            return body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"malformed chat completion response: {exc}") from exc


def load_script(path: str | Path) -> tuple[list[ScriptRule], str | None]:
    """Load scripted-model rules from a line-delimited fixture file."""
    rules: list[ScriptRule] = []
    default: str | None = None
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetFormatError(f"bad script record: {exc}", line=line_no) from exc
            if "default" in record:
                default = record["default"]
                continue
            if "response" not in record or ("query" not in record and "pattern" not in record):
                raise DatasetFormatError("script record needs 'response' plus 'query' or 'pattern'", line=line_no)
            rules.append(
                ScriptRule(response=record["response"], query=record.get("query"), pattern=record.get("pattern"))
            )
    return rules, default


def build_chat_model(spec: ChatModelSpec) -> ChatModel:
    """Instantiate the provider a spec describes."""
    if spec.kind is ChatKind.SCRIPTED:
        rules = list(spec.rules)
        default = spec.default_response
        if spec.script_path:
            file_rules, file_default = load_script(spec.script_path)
            rules.extend(file_rules)
            if default is None:
                default = file_default
        return ScriptedChatModel(rules, default_response=default, model_id=spec.model_name)
    return RemoteChatModel(spec)
