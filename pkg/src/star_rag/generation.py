"""Prompt assembly, the chat-completions client, and answer-list parsing."""

from __future__ import annotations

import os
import re
import time
from dataclasses import dataclass, field

import requests

from .retrieval import RetrievalResult
from .embedding import render_event_text
from .tkg import TemporalKG

API_KEY_ENV = "STAR_RAG_LLM_KEY"

SYSTEM_INSTRUCTION = """\
As an advanced reading comprehension assistant, your task is to analyze multiple triple facts and corresponding questions with time constraints meticulously.

Your response start after "Thought: ", where you will methodically break down the reasoning process, illustrating how you arrive at conclusions.

Keep subject/object orientation. Match the same base relation. Apply temporal operator precisely.

Conclude with "Answer: " to present return 10 short answer candidates ranked best-to-worst, devoid of additional elaborations."""

DEMONSTRATION = """\
Events:
Event A: On 2010-08-30, European Central Bank criticized Romania.
Event B: On 2011-02-14, European Central Bank criticized government of Germany.

Question:
Before Germany, who did the European Central Bank criticize last?

Answer:
Romania."""

_RETRY_BACKOFF_BASE = 0.2
_MAX_CANDIDATES = 10
_LIST_MARKER = re.compile(r"^\s*(?:\d+[.)]|[-*•])\s*")


class EmptyRetrieval(ValueError):
    pass


class LlmError(RuntimeError):
    pass


class EmptyResponse(ValueError):
    pass


def count_tokens(text: str) -> int:
    """Whitespace-token estimate; every report that uses it says so."""
    return len(text.split())


@dataclass(frozen=True)
class PromptBundle:
    system_instruction: str
    demonstration: str
    events_block: str
    question: str

    def user_message(self) -> str:
        return (
            f"{self.demonstration}\n\n"
            f"Events:\n{self.events_block}\n\n"
            f"Question:\n{self.question}"
        )

    def token_count(self) -> int:
        return count_tokens(self.system_instruction) + count_tokens(self.user_message())


@dataclass(frozen=True)
class AnswerList:
    candidates: tuple[str, ...]
    raw_response: str
    thought: str = ""
    lenient: bool = False


@dataclass
class LlmClientConfig:
    endpoint: str
    model: str
    max_tokens: int = 512
    temperature: float = 0.0
    timeout: float = 60.0
    retries: int = 3
    session: requests.Session | None = field(default=None, repr=False)


def assemble_prompt(result: RetrievalResult, question: str, kg: TemporalKG) -> PromptBundle:
    """Instruction + one-shot demonstration + numbered evidence list + question."""
    if not result.events:
        raise EmptyRetrieval("retrieval produced no events to prompt with")
    lines = [
        f"{i}. {render_event_text(kg, kg.events[eid])}"
        for i, (eid, _) in enumerate(result.events, start=1)
    ]
    return PromptBundle(
        system_instruction=SYSTEM_INSTRUCTION,
        demonstration=DEMONSTRATION,
        events_block="\n".join(lines),
        question=question,
    )


def call_llm(config: LlmClientConfig, prompt: PromptBundle) -> str:
    """POST the prompt to ``{endpoint}/chat/completions`` and return the assistant text.

    Retries with exponential backoff on 5xx and network failures. The API key is
    read from the environment at call time and never logged.
    """
    payload = {
        "model": config.model,
        "messages": [
            {"role": "system", "content": prompt.system_instruction},
            {"role": "user", "content": prompt.user_message()},
        ],
        "temperature": config.temperature,
        "max_tokens": config.max_tokens,
    }
    headers = {}
    api_key = os.environ.get(API_KEY_ENV)
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"
    session = config.session or requests
    url = f"{config.endpoint.rstrip('/')}/chat/completions"

    last_error: Exception | None = None
    timed_out = False
    for attempt in range(config.retries + 1):
        try:
            response = session.post(url, json=payload, headers=headers, timeout=config.timeout)
        except requests.Timeout as exc:
            last_error, timed_out = exc, True
        except requests.ConnectionError as exc:
            last_error, timed_out = exc, False
        else:
            if response.status_code == 200:
                try:
                    return response.json()["choices"][0]["message"]["content"]
                except (KeyError, IndexError, TypeError, ValueError) as exc:
                    raise LlmError(f"malformed LLM response: {exc}") from exc
            if response.status_code < 500:
                raise LlmError(f"LLM request rejected with HTTP {response.status_code}")
            # 5xx: transient server trouble, retry
            last_error, timed_out = LlmError(f"LLM service returned HTTP {response.status_code}"), False
        if attempt < config.retries:
            time.sleep(min(4.0, _RETRY_BACKOFF_BASE * 2**attempt))
    if timed_out:
        raise TimeoutError(
            f"LLM request timed out after {config.retries + 1} attempts"
        ) from last_error
    raise LlmError(
        f"LLM request failed after {config.retries + 1} attempts: {last_error}"
    ) from last_error


def _clean_candidate(text: str) -> str:
    text = _LIST_MARKER.sub("", text.strip())
    return text.rstrip(".,").strip()


def parse_answers(raw: str) -> AnswerList:
    """Extract ranked answer candidates from the text after the last "Answer:" marker.

    Candidates split on newlines, commas and list markers, keep at most 10. With no
    marker, the last non-empty line becomes the sole candidate (lenient mode).
    """
    if not raw or not raw.strip():
        raise EmptyResponse("LLM returned a blank response")
    marker = raw.rfind("Answer:")
    if marker < 0:
        last_line = [line for line in raw.splitlines() if line.strip()][-1]
        candidate = _clean_candidate(last_line)
        return AnswerList(
            candidates=(candidate,) if candidate else (),
            raw_response=raw,
            lenient=True,
        )
    head = raw[:marker]
    tail = raw[marker + len("Answer:") :]
    thought = ""
    thought_at = head.find("Thought:")
    if thought_at >= 0:
        thought = head[thought_at + len("Thought:") :].strip()

    candidates: list[str] = []
    for line in tail.splitlines():
        for piece in line.split(","):
            cleaned = _clean_candidate(piece)
            if cleaned:
                candidates.append(cleaned)
            if len(candidates) == _MAX_CANDIDATES:
                break
        if len(candidates) == _MAX_CANDIDATES:
            break
    return AnswerList(candidates=tuple(candidates), raw_response=raw, thought=thought)
