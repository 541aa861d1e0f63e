"""Pluggable completion backends behind the agents.

The deterministic backend answers from the instruction grammar so the whole
pipeline is a pure function of the transcript; the remote backend speaks an
OpenAI-style chat-completions protocol.  Both return raw text; extract_json
turns agent output into typed values and never lets arbitrary text crash
the caller.
"""

from __future__ import annotations

import json
import logging
import re
import time
from dataclasses import dataclass
from importlib import resources

logger = logging.getLogger(__name__)

AGENT_ROLES = ("parser", "locator", "abstractor", "cot")


class GatewayError(Exception):
    pass


class Timeout(GatewayError):
    pass


class TransportError(GatewayError):
    pass


class ProviderError(GatewayError):
    def __init__(self, status: int, body: str = ""):
        self.status = status
        super().__init__(f"provider returned status {status}")


class MalformedOutput(GatewayError):
    def __init__(self, reason: str, text: str = ""):
        self.reason = reason
        self.text = text
        super().__init__(f"malformed agent output: {reason}")


def load_prompt_text(name: str) -> str:
    return resources.files("coblock.prompts").joinpath(f"{name}.txt").read_text()


@dataclass(frozen=True)
class AgentPrompt:
    """System prompt for one agent role, built from versioned resource files."""

    role: str
    system_text: str
    environment_preamble: str

    @classmethod
    def for_role(cls, role: str) -> "AgentPrompt":
        if role not in AGENT_ROLES:
            raise ValueError(f"unknown agent role {role!r}")
        env = load_prompt_text("environment")
        if role == "cot":
            return cls(role, load_prompt_text("cot"), env)
        text = load_prompt_text(role).replace("{environment}", env)
        return cls(role, text, env)


@dataclass(frozen=True)
class BackendConfig:
    kind: str = "deterministic"  # "deterministic" | "remote"
    endpoint: str = ""
    model: str = ""
    timeout: float = 30.0
    max_retries: int = 2
    temperature: float = 0.0
    api_key: str = ""
    debug_log: bool = False

    def __post_init__(self):
        if self.kind not in ("deterministic", "remote"):
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if not 0 <= self.max_retries <= 5:
            raise ValueError("retries must be between 0 and 5")

    @classmethod
    def from_dict(cls, data: dict) -> "BackendConfig":
        return cls(**{k: v for k, v in data.items() if k in cls.__dataclass_fields__})


class DeterministicBackend:
    """Grammar-backed completions: parser echoes the utterance as a single
    structure plan, locator returns the instruction unchanged.  Identical
    input always yields identical bytes."""

    kind = "deterministic"

    def complete(self, prompt: AgentPrompt, messages: list[dict]) -> str:
        last_user = next((m["content"] for m in reversed(messages) if m.get("role") == "user"), "")
        if prompt.role == "parser":
            return json.dumps({"structures": [{"plan": last_user, "name": ""}]}, separators=(",", ":"))
        if prompt.role == "locator":
            return json.dumps({"instruction": last_user}, separators=(",", ":"))
        raise ProviderError(501, f"deterministic backend has no {prompt.role} completion")


class RemoteBackend:
    """OpenAI-style chat-completions over HTTP with bounded retries."""

    kind = "remote"

    def __init__(self, config: BackendConfig):
        if not config.endpoint:
            raise ValueError("remote backend needs an endpoint URL")
        self.config = config

    def complete(self, prompt: AgentPrompt, messages: list[dict]) -> str:
        import httpx

        payload = {
            "model": self.config.model,
            "messages": [{"role": "system", "content": prompt.system_text}] + messages,
            "temperature": self.config.temperature,
        }
        headers = {"Content-Type": "application/json"}
        if self.config.api_key:
            headers["Authorization"] = f"Bearer {self.config.api_key}"
        if self.config.debug_log:
            logger.debug("request to %s: %s", self.config.endpoint, json.dumps(payload)[:2000])

        last_error: GatewayError | None = None
        for attempt in range(self.config.max_retries + 1):
            try:
                response = httpx.post(
                    self.config.endpoint,
                    json=payload,
                    headers=headers,
                    timeout=self.config.timeout,
                )
            except httpx.TimeoutException as err:
                last_error = Timeout(str(err))
            except httpx.HTTPError as err:
                last_error = TransportError(str(err))
            else:
                if response.status_code >= 400:
                    raise ProviderError(response.status_code, response.text[:500])
                try:
                    body = response.json()
                    text = body["choices"][0]["message"]["content"]
                except (KeyError, IndexError, TypeError, ValueError) as err:
                    raise MalformedOutput(f"unexpected response body: {err}")
                if self.config.debug_log:
                    logger.debug("response: %s", text[:2000])
                return text
            if attempt < self.config.max_retries:
                time.sleep(min(0.2 * (attempt + 1), 1.0))
        raise last_error


def make_backend(config: BackendConfig):
    if config.kind == "remote":
        return RemoteBackend(config)
    return DeterministicBackend()


_FENCE_RE = re.compile(r"```(?:json|python)?\s*(.*?)```", re.DOTALL)

SCHEMAS: dict[str, dict] = {
    "structures": {"required": ["structures"], "item_keys": ["plan", "name"]},
    "instruction": {"required": ["instruction"]},
    "function": {"required": []},  # raw python text, fence-stripped
}


def extract_json(text: str, schema: str):
    """Strips fences and surrounding prose, parses, and validates required
    keys.  All failures are MalformedOutput; nothing else escapes."""
    if schema not in SCHEMAS:
        raise MalformedOutput(f"unknown schema {schema!r}", text)
    if not isinstance(text, str) or not text.strip():
        raise MalformedOutput("empty output", text or "")

    stripped = text
    fence = _FENCE_RE.search(text)
    if fence:
        stripped = fence.group(1)

    if schema == "function":
        if "def " not in stripped:
            raise MalformedOutput("no function definition found", text)
        return stripped.strip()

    candidate = _find_json_object(stripped)
    if candidate is None:
        raise MalformedOutput("no JSON object found", text)
    try:
        value = json.loads(candidate)
    except json.JSONDecodeError as err:
        raise MalformedOutput(f"invalid JSON: {err}", text)
    if not isinstance(value, dict):
        raise MalformedOutput("top-level JSON is not an object", text)
    spec = SCHEMAS[schema]
    for key in spec["required"]:
        if key not in value:
            raise MalformedOutput(f"missing key {key!r}", text)
    if schema == "structures":
        items = value["structures"]
        if not isinstance(items, list):
            raise MalformedOutput("'structures' is not a list", text)
        for item in items:
            if not isinstance(item, dict) or any(k not in item for k in spec["item_keys"]):
                raise MalformedOutput("structure item missing plan/name", text)
        return items
    if schema == "instruction":
        if not isinstance(value["instruction"], str):
            raise MalformedOutput("'instruction' is not a string", text)
        return value["instruction"]
    return value


def _find_json_object(text: str) -> str | None:
    start = text.find("{")
    if start < 0:
        return None
    depth = 0
    in_string = False
    escaped = False
    for i in range(start, len(text)):
        ch = text[i]
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            in_string = True
        elif ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return text[start : i + 1]
    return None
