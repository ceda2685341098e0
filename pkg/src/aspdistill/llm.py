"""Conversational backends and salvage of ASP rules from model responses."""

from __future__ import annotations

import enum
import json
import logging
import os
import re
import threading
import time
import uuid
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .asp_core import AspSyntaxError, Program, RuleKind, Token, _split_statements, parse_statement, tokenize

log = logging.getLogger(__name__)

EMPTY_RESPONSE = "% (empty response)"


class BackendError(Exception):
    pass


class TransportError(BackendError):
    def __init__(self, message: str, retryable: bool = True):
        super().__init__(message)
        self.retryable = retryable


class ScriptExhausted(BackendError):
    pass


class ReplayDivergence(BackendError):
    pass


class Role(str, enum.Enum):
    SYSTEM = "system"
    USER = "user"
    ASSISTANT = "assistant"


@dataclass(frozen=True)
class ChatTurn:
    role: Role
    content: str
    timestamp: float

    def to_record(self) -> dict:
        return {"role": self.role.value, "content": self.content, "ts": self.timestamp}


class Transcript:
    """Append-only conversation log, optionally mirrored line by line to a file."""

    def __init__(self, session_id: Optional[str] = None, log_path=None):
        self.session_id = session_id or uuid.uuid4().hex[:12]
        self._turns: list[ChatTurn] = []
        self._lock = threading.Lock()
        self.log_path = Path(log_path) if log_path is not None else None
        if self.log_path is not None:
            self.log_path.parent.mkdir(parents=True, exist_ok=True)
            self.log_path.write_text("", encoding="utf-8")

    @property
    def turns(self) -> tuple:
        return tuple(self._turns)

    def __len__(self) -> int:
        return len(self._turns)

    def append(self, role, content: str, timestamp: Optional[float] = None) -> ChatTurn:
        role = Role(role)
        with self._lock:
            expected = self._expected_role()
            if role is not expected:
                raise ValueError(f"expected a {expected.value} turn, got {role.value}")
            if role is not Role.SYSTEM and not content.strip():
                raise ValueError("user and assistant turns must be nonempty")
            turn = ChatTurn(role, content, time.time() if timestamp is None else timestamp)
            self._turns.append(turn)
            if self.log_path is not None:
                with open(self.log_path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(turn.to_record()) + "\n")
            return turn

    def _expected_role(self) -> Role:
        if not self._turns:
            return Role.SYSTEM
        return Role.ASSISTANT if self._turns[-1].role is Role.USER else Role.USER

    @property
    def system_prompt(self) -> Optional[str]:
        return self._turns[0].content if self._turns else None

    def user_prompts(self) -> list[str]:
        return [t.content for t in self._turns if t.role is Role.USER]

    def messages(self) -> list[dict]:
        return [{"role": t.role.value, "content": t.content} for t in self._turns]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(t.to_record()) + "\n" for t in self._turns)

    def save(self, path) -> None:
        Path(path).write_text(self.to_jsonl(), encoding="utf-8")

    @classmethod
    def load(cls, path, session_id: Optional[str] = None) -> "Transcript":
        transcript = cls(session_id=session_id)
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    rec = json.loads(line)
                    transcript.append(rec["role"], rec["content"], rec.get("ts"))
        return transcript


# --------------------------------------------------------------------------
# backends


class Backend:
    """A source of assistant replies.  Subclasses implement :meth:`generate`."""

    kind = "abstract"

    def generate(self, transcript: Transcript, prompt: str) -> str:
        raise NotImplementedError

    def describe(self) -> dict:
        return {"kind": self.kind}


def respond(backend: Backend, transcript: Transcript, prompt: str) -> str:
    """Send ``prompt`` in the conversation and record both turns.

    Nothing is appended when the backend fails, so the transcript stays
    well-formed for a later retry.
    """
    if not transcript.turns:
        raise ValueError("transcript has no system turn")
    if not prompt.strip():
        raise ValueError("prompt must be nonempty")
    text = backend.generate(transcript, prompt)
    if not text or not text.strip():
        text = EMPTY_RESPONSE
    transcript.append(Role.USER, prompt)
    transcript.append(Role.ASSISTANT, text)
    return text


class ScriptedBackend(Backend):
    kind = "scripted"

    def __init__(self, responses):
        self._responses = list(responses)
        self._next = 0
        self._lock = threading.Lock()

    def generate(self, transcript, prompt):
        with self._lock:
            if self._next >= len(self._responses):
                raise ScriptExhausted(f"all {len(self._responses)} scripted responses were used")
            text = self._responses[self._next]
            self._next += 1
            return text

    def describe(self):
        return {"kind": self.kind, "responses": len(self._responses)}


class ReplayBackend(Backend):
    """Answer with the assistant turns of a recorded conversation."""

    kind = "replay"

    def __init__(self, recorded):
        if not isinstance(recorded, Transcript):
            recorded = Transcript.load(recorded)
        turns = recorded.turns
        self._system = recorded.system_prompt
        self._pairs = [
            (turns[i].content, turns[i + 1].content)
            for i in range(1, len(turns) - 1, 2)
            if turns[i].role is Role.USER and turns[i + 1].role is Role.ASSISTANT
        ]

    def generate(self, transcript, prompt):
        if transcript.system_prompt != self._system:
            raise ReplayDivergence("system prompt differs from the recording")
        index = len(transcript.user_prompts())
        if index >= len(self._pairs):
            raise ReplayDivergence(f"recording has only {len(self._pairs)} exchanges")
        recorded_prompt, reply = self._pairs[index]
        if recorded_prompt != prompt:
            raise ReplayDivergence(f"prompt {index} differs from the recording")
        return reply

    def describe(self):
        return {"kind": self.kind, "exchanges": len(self._pairs)}


class OracleFault(str, enum.Enum):
    NONE = "none"
    SYNTAX = "syntax"  # the first reply makes the solver reject the program
    SEMANTIC = "semantic"  # the first reply parses but yields a wrong answer


class OracleBackend(Backend):
    """Replies with a fixed hidden program, whatever the prompt.

    With a fault configured, only the first reply is corrupted.
    """

    kind = "oracle"

    def __init__(self, hidden: Program, fault=OracleFault.NONE):
        self._hidden = hidden
        self._fault = OracleFault(fault)
        self._calls = 0
        self._lock = threading.Lock()

    def generate(self, transcript, prompt):
        with self._lock:
            self._calls += 1
            first = self._calls == 1
        text = self._hidden.serialize().strip()
        if not text:
            return "% no rules to add"
        if first and self._fault is OracleFault.SYNTAX:
            return inject_unsafe_variable(self._hidden)
        if first and self._fault is OracleFault.SEMANTIC:
            return swap_truth_values(self._hidden)
        return text

    def describe(self):
        return {"kind": self.kind, "fault": self._fault.value, "rules": len(self._hidden)}


def inject_unsafe_variable(program: Program) -> str:
    """Rename one head variable so the solver rejects the rule as unsafe."""
    lines = [r.source_text for r in program.rules]
    for i, rule in enumerate(program.rules):
        if rule.head is None:
            continue
        head_vars = [t for t in rule.head.terms if isinstance(t, str) and t[:1].isupper()]
        if head_vars:
            var = head_vars[0]
            head_text = str(rule.head)
            new_head = re.sub(rf"\b{re.escape(var)}\b", var + "Unbound", head_text, count=1)
            lines[i] = new_head + rule.source_text[len(head_text):]
            return "\n".join(lines)
    # no head variable anywhere: add an unsafe negative literal to the first rule
    first = lines[0]
    lines[0] = first[:-1] + (", " if ":-" in first else " :- ") + "not fault(Unbound)."
    return "\n".join(lines)


_SWAPS = {"true": "false", "false": "true", "yes": "no", "no": "yes"}


def swap_truth_values(program: Program) -> str:
    text = program.serialize().strip()
    swapped = re.sub(r"\b(true|false|yes|no)\b", lambda m: _SWAPS[m.group(1)], text)
    if swapped != text:
        return swapped
    return "\n".join(r.source_text for r in program.rules[:-1]) or "% no rules"


class RemoteHttpBackend(Backend):
    """Chat-completion style HTTP endpoint.

    The credential is read from the environment at call time and never stored
    in transcripts, configs or logs.
    """

    kind = "http"

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key_env: str = "LLM_API_KEY",
        temperature: float = 0.0,
        max_retries: int = 3,
        backoff: float = 1.0,
        timeout: float = 120.0,
        client=None,
    ):
        import httpx

        self.endpoint = endpoint
        self.model = model
        self.api_key_env = api_key_env
        self.temperature = temperature
        self.max_retries = max_retries
        self.backoff = backoff
        self._client = client or httpx.Client(timeout=timeout)
        self._httpx = httpx

    def request_body(self, transcript: Transcript, prompt: str) -> dict:
        messages = transcript.messages() + [{"role": "user", "content": prompt}]
        return {"model": self.model, "messages": messages, "temperature": self.temperature}

    def generate(self, transcript, prompt):
        body = self.request_body(transcript, prompt)
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        delay = self.backoff
        for attempt in range(1, self.max_retries + 1):
            try:
                return self._post(body, headers)
            except TransportError as exc:
                if not exc.retryable or attempt == self.max_retries:
                    raise
                log.warning("LLM request failed (attempt %d/%d): %s", attempt, self.max_retries, exc)
                time.sleep(delay)
                delay *= 2
        raise TransportError("no attempts made", retryable=False)

    def _post(self, body: dict, headers: dict) -> str:
        try:
            resp = self._client.post(self.endpoint, json=body, headers=headers)
        except self._httpx.HTTPError as exc:
            raise TransportError(f"{type(exc).__name__}: {exc}") from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransportError(f"HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}", retryable=False)
        try:
            return resp.json()["choices"][0]["message"]["content"] or ""
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed response: {exc}", retryable=False) from exc

    def describe(self):
        return {"kind": self.kind, "endpoint": self.endpoint, "model": self.model, "temperature": self.temperature}


# --------------------------------------------------------------------------
# rule salvage

_FENCE = re.compile(r"^\s*(```|~~~)")


def _ends_statement(tokens: list[Token]) -> bool:
    # weak constraints end with their [weight@level] suffix
    return tokens[-1].kind == "dot" or (tokens[0].kind == "weak" and tokens[-1].text == "]")


def _salvage(text: str, no_facts_guard: bool) -> Optional[list[str]]:
    """Accepted statements of ``text``, or ``None`` if nothing in it parses."""
    try:
        stmts = _split_statements(tokenize(text), text)
    except AspSyntaxError:
        return None
    parsed_any = False
    kept = []
    for stmt in stmts:
        if stmt[0].kind == "directive":
            continue
        try:
            rule = parse_statement(stmt, text)
        except AspSyntaxError:
            continue
        parsed_any = True
        if no_facts_guard and rule.kind is RuleKind.FACT:
            continue
        kept.append(rule.source_text)
    return kept if parsed_any else None


def extract_rules(response: str, no_facts_guard: bool = True) -> list[str]:
    """Keep the well-formed rule statements of a free-form response.

    Code fences, prose and unparseable statements are dropped; so are facts
    when ``no_facts_guard`` is set, and solver directives.  A statement may
    continue over several lines.
    """
    out: list[str] = []
    buffer: list[str] = []
    for raw in response.splitlines():
        line = raw.strip()
        if _FENCE.match(raw) or not line:
            buffer = []
            continue
        try:
            tokens = tokenize(line)
        except AspSyntaxError:
            buffer = []
            continue
        if not tokens:
            continue  # comment line
        buffer.append(line)
        if not _ends_statement(tokens):
            continue
        kept = _salvage(" ".join(buffer), no_facts_guard)
        if kept is None and len(buffer) > 1:
            kept = _salvage(line, no_facts_guard)
        buffer = []
        out.extend(kept or ())
    seen: set = set()
    return [s for s in out if not (s in seen or seen.add(s))]
