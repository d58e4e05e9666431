"""Uniform completion interface over language-model backends.

Two backends ship here: an HTTP JSON completion client (bearer auth, retry
with backoff, configurable timeout) and a scripted backend for offline,
reproducible runs. The scripted backend answers from an ordered rule table
(regex over the prompt, first match wins, backreference expansion) and can
additionally run in oracle mode, where it computes faithful responses for
the pipeline's own prompt shapes by reading the facts out of the prompt.

Stop-sequence semantics are identical across backends: the returned text
never contains a stop sequence.
"""

from __future__ import annotations

import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass
from typing import Protocol, Sequence

import httpx

from ._http import post_json_with_retries
from .errors import MalformedBackendResponse

logger = logging.getLogger(__name__)

_TOKEN_SPAN_RE = re.compile(r"\S+")
_WORD_RE = re.compile(r"[a-z0-9]+")

# Filler words ignored when the oracle matches relation names to questions.
_RELATION_STOPWORDS = {"a", "an", "by", "has", "in", "is", "of", "the", "to", "was"}


@dataclass(frozen=True)
class CompletionRequest:
    prompt: str
    max_tokens: int = 256
    temperature: float = 0.3
    top_k: int = 40
    min_p: float = 0.05
    repeat_penalty: float = 1.0
    stop_sequences: tuple[str, ...] = ()
    seed: int = 0

    def __post_init__(self):
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not 0 <= self.min_p <= 1:
            raise ValueError("min_p must be in [0, 1]")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")


@dataclass(frozen=True)
class CompletionResponse:
    text: str
    finish_reason: str  # stop | length | error
    backend_latency_ms: float = 0.0


@dataclass(frozen=True)
class SamplingProfile:
    """Per-role request parameters; prompt and seed are filled by the caller."""

    max_tokens: int = 256
    temperature: float = 0.3
    top_k: int = 40
    min_p: float = 0.05
    repeat_penalty: float = 1.0
    stop_sequences: tuple[str, ...] = ()

    def request(self, prompt: str, seed: int = 0) -> CompletionRequest:
        return CompletionRequest(
            prompt=prompt,
            max_tokens=self.max_tokens,
            temperature=self.temperature,
            top_k=self.top_k,
            min_p=self.min_p,
            repeat_penalty=self.repeat_penalty,
            stop_sequences=self.stop_sequences,
            seed=seed,
        )


# One shared parameter profile per pipeline role; overridable from config.
DEFAULT_PROFILES: dict[str, SamplingProfile] = {
    "decompose": SamplingProfile(stop_sequences=("<END>",)),
    "sub_answer": SamplingProfile(repeat_penalty=1.1),
    "reformulate": SamplingProfile(stop_sequences=("?",)),
    "synthesize": SamplingProfile(max_tokens=512),
    "direct": SamplingProfile(repeat_penalty=1.1),
}


class CompletionBackend(Protocol):
    def complete(self, request: CompletionRequest) -> CompletionResponse: ...


def apply_stop_and_limit(text: str, request: CompletionRequest):
    """Cut at the earliest stop sequence or the max_tokens-th whitespace token.

    Returns (text, finish_reason). A stop hit within the token budget wins;
    otherwise running past the budget reports "length".
    """
    stop_pos = None
    for stop in request.stop_sequences:
        pos = text.find(stop)
        if pos != -1 and (stop_pos is None or pos < stop_pos):
            stop_pos = pos
    spans = list(_TOKEN_SPAN_RE.finditer(text))
    limit_pos = spans[request.max_tokens - 1].end() if len(spans) > request.max_tokens else None
    if stop_pos is not None and (limit_pos is None or stop_pos <= limit_pos):
        return text[:stop_pos], "stop"
    if limit_pos is not None:
        return text[:limit_pos], "length"
    return text, "stop"


@dataclass(frozen=True)
class ScriptedRule:
    match: str    # regex searched over the whole prompt
    respond: str  # template; \1..\9 expand to capture groups


def load_rules(path) -> list[ScriptedRule]:
    """Rules file: JSON list of {"match": regex, "respond": template}."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    return [ScriptedRule(match=item["match"], respond=item["respond"]) for item in raw]


class ScriptedBackend:
    """Deterministic backend: rule table first, oracle mode as fallback.

    Oracle mode recognizes the pipeline's prompt roles by their instruction
    markers and computes responses from the prompt content alone, which makes
    fully offline end-to-end runs both possible and repeatable.
    """

    def __init__(
        self,
        rules: Sequence[ScriptedRule] = (),
        oracle_mode: bool = False,
        default_response: str = "",
    ):
        self.rules = [(re.compile(r.match, re.MULTILINE), r) for r in rules]
        self.oracle_mode = oracle_mode
        self.default_response = default_response
        self._calls = 0
        self._lock = threading.Lock()

    @property
    def calls(self) -> int:
        return self._calls

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        with self._lock:
            self._calls += 1
        start = time.perf_counter()
        text = self._respond(request.prompt)
        text, finish = apply_stop_and_limit(text, request)
        latency = (time.perf_counter() - start) * 1000.0
        return CompletionResponse(
            text=text, finish_reason=finish, backend_latency_ms=latency
        )

    def _respond(self, prompt: str) -> str:
        for compiled, rule in self.rules:
            m = compiled.search(prompt)
            if m:
                return m.expand(rule.respond)
        if self.oracle_mode:
            return oracle_respond(prompt)
        return self.default_response


# ---------------------------------------------------------------------------
# Oracle-mode responders
# ---------------------------------------------------------------------------

_FACT_LINE_RE = re.compile(r"^\s*\d+\.\s*\((.+)\)\s*$", re.MULTILINE)
_QUESTION_LINE_RE = re.compile(r"^Question:\s*(.+?)\s*$", re.MULTILINE)
_PAIR_LINE_RE = re.compile(r"^\s*(\d+)\.\s*Q:\s*(.+?)\s*A:\s*(.+?)\s*$", re.MULTILINE)
_REWRITE_LINE_RE = re.compile(r"^Rewrite:\s*(.+?)\s*$", re.MULTILINE)
_ANSWER_PLACEHOLDER_RE = re.compile(r"\{answer of (\d+)\}")


def oracle_respond(prompt: str) -> str:
    """Dispatch on the instruction markers of the pipeline's prompt roles."""
    if "using only the numbered facts" in prompt:
        return _oracle_answer_from_facts(prompt)
    if "No facts were found" in prompt:
        return "I don't know."
    if "Rewrite the question" in prompt:
        return _oracle_reformulate(prompt)
    if 'line starting with "Answer:"' in prompt:
        return _oracle_synthesize(prompt)
    if "decide whether it needs to be split" in prompt:
        return (
            "Reasoning: The question asks for a single fact, "
            "so it does not need to be split.\nNo decomposition needed.\n<END>"
        )
    return "unknown"


def _entity_in_text(name: str, text: str) -> bool:
    return (
        re.search(
            rf"(?<![A-Za-z0-9]){re.escape(name)}(?![A-Za-z0-9])", text, re.IGNORECASE
        )
        is not None
    )


def _relation_matches(relation: str, question_tokens: set[str]) -> bool:
    content = [t for t in _WORD_RE.findall(relation.lower()) if t not in _RELATION_STOPWORDS]
    for rc in content:
        for qt in question_tokens:
            if qt == rc:
                return True
            if min(len(qt), len(rc)) >= 4 and (qt.startswith(rc) or rc.startswith(qt)):
                return True
    return False


def _oracle_answer_from_facts(prompt: str) -> str:
    questions = _QUESTION_LINE_RE.findall(prompt)
    if not questions:
        return "I don't know."
    question = questions[-1]
    question_tokens = set(_WORD_RE.findall(question.lower()))
    answers: list[str] = []
    for inner in _FACT_LINE_RE.findall(prompt):
        parts = inner.split(", ")
        if len(parts) != 3:
            continue
        subject, relation, obj = parts
        if not _relation_matches(relation, question_tokens):
            continue
        s_in = _entity_in_text(subject, question)
        o_in = _entity_in_text(obj, question)
        if s_in and not o_in and obj not in answers:
            answers.append(obj)
        elif o_in and not s_in and subject not in answers:
            answers.append(subject)
    return ", ".join(answers) if answers else "I don't know."


def _oracle_reformulate(prompt: str) -> str:
    answers = {int(num): answer for num, _, answer in _PAIR_LINE_RE.findall(prompt)}
    targets = _REWRITE_LINE_RE.findall(prompt)
    if not targets:
        return ""
    target = targets[-1]

    def substitute(m: re.Match) -> str:
        return answers.get(int(m.group(1)), m.group(0))

    return _ANSWER_PLACEHOLDER_RE.sub(substitute, target)


def _oracle_synthesize(prompt: str) -> str:
    pairs = _PAIR_LINE_RE.findall(prompt)
    if not pairs:
        return "Answer: unknown"
    last_answer = pairs[-1][2]
    first_entity = last_answer.split(", ")[0].strip()
    return (
        "Following the answered sub-questions in order leads to the result.\n"
        f"Answer: {first_entity}"
    )


# ---------------------------------------------------------------------------
# HTTP backend
# ---------------------------------------------------------------------------


class HttpCompletionBackend:
    """POST {model, prompt, sampling params, stop, seed} to a JSON endpoint.

    Response may carry the generation as {"text": ...} or OpenAI-style
    {"choices": [{"text": ...}]}. Parameters listed as unsupported are
    dropped with a warning instead of failing, so the pipeline stays
    backend-agnostic.
    """

    def __init__(
        self,
        endpoint: str,
        model: str,
        auth_token: str | None = None,
        timeout: float = 120.0,
        unsupported_params: Sequence[str] = (),
        max_retries: int = 2,
        backoff_base: float = 0.5,
        transport: httpx.BaseTransport | None = None,
    ):
        self.endpoint = endpoint
        self.model = model
        self.unsupported_params = set(unsupported_params)
        self._warned: set[str] = set()
        headers = {}
        if auth_token:
            headers["Authorization"] = f"Bearer {auth_token}"
        self._client = httpx.Client(
            timeout=timeout, headers=headers, transport=transport
        )
        self._max_retries = max_retries
        self._backoff_base = backoff_base

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        payload = {
            "model": self.model,
            "prompt": request.prompt,
            "max_tokens": request.max_tokens,
            "temperature": request.temperature,
            "top_k": request.top_k,
            "min_p": request.min_p,
            "repeat_penalty": request.repeat_penalty,
            "stop": list(request.stop_sequences),
            "seed": request.seed,
        }
        for name in self.unsupported_params:
            if name in payload:
                payload.pop(name)
                if name not in self._warned:
                    self._warned.add(name)
                    logger.warning("dropping parameter %r: backend does not support it", name)
        start = time.perf_counter()
        data = post_json_with_retries(
            self._client,
            self.endpoint,
            payload,
            max_retries=self._max_retries,
            backoff_base=self._backoff_base,
        )
        latency = (time.perf_counter() - start) * 1000.0
        text, finish = _parse_completion_payload(data)
        # Enforce the cross-backend invariant even if the server ignored stop.
        cut, cut_reason = apply_stop_and_limit(text, request)
        if cut != text:
            text, finish = cut, cut_reason
        return CompletionResponse(
            text=text, finish_reason=finish, backend_latency_ms=latency
        )


def _parse_completion_payload(data: dict):
    if not isinstance(data, dict):
        raise MalformedBackendResponse(f"expected JSON object, got {type(data).__name__}")
    finish = data.get("finish_reason")
    if "text" in data:
        text = data["text"]
    elif "choices" in data:
        try:
            choice = data["choices"][0]
            text = choice["text"]
            finish = choice.get("finish_reason", finish)
        except (IndexError, KeyError, TypeError) as exc:
            raise MalformedBackendResponse(f"unusable choices array: {exc}") from exc
    else:
        raise MalformedBackendResponse("response has neither 'text' nor 'choices'")
    if not isinstance(text, str):
        raise MalformedBackendResponse("generation text is not a string")
    if finish not in ("stop", "length", "error"):
        finish = "stop"
    return text, finish


def resolve_auth_token(env_var: str | None) -> str | None:
    """Bearer token from the configured environment variable, if any."""
    if not env_var:
        return None
    return os.environ.get(env_var) or None
