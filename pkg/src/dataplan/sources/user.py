"""User source: the human as a queryable database.

Answers are remembered in a per-namespace profile with a freshness TTL.
A query with no fresh profile entry emits a prompt message on the session
stream and suspends the calling plan node by raising :class:`PromptPending`;
the executor resumes it once a matching answer arrives.
"""

from __future__ import annotations

import json
import re
import threading
import time
from dataclasses import dataclass
from typing import Any, Callable, Mapping, Optional

from ..data import DataBatch, Table, validate_schema
from ..errors import NotFoundError, VerificationError
from ..registry import MetadataEntry, SourceDescriptor
from ..sessions import Session

_PUNCT = re.compile(r"[^\w\s]", re.UNICODE)

MAX_ANSWER_ATTEMPTS = 3
DEFAULT_TTL_SECONDS = 86400


def normalize_question(question: str) -> str:
    """Profile key: lowercase, punctuation stripped, whitespace collapsed."""
    return " ".join(_PUNCT.sub(" ", question.lower()).split())


@dataclass
class UserProfileEntry:
    key: str
    value: dict  # Table.to_obj()
    asked_at: float
    ttl_seconds: int

    def fresh(self, now: float) -> bool:
        return now - self.asked_at < self.ttl_seconds


@dataclass
class PendingPrompt:
    prompt_id: str
    question: str
    normalized_key: str
    output_schema: dict
    ttl_seconds: int
    namespace: str
    attempts: int = 0
    node_id: Optional[str] = None


class PromptPending(Exception):
    """Raised to suspend the calling node until the user answers."""

    def __init__(self, prompt: PendingPrompt):
        super().__init__(f"waiting on user prompt {prompt.prompt_id}")
        self.prompt = prompt


class UserSource:
    protocol = "user"

    def __init__(self, descriptor: SourceDescriptor, time_fn: Callable[[], float] = time.time):
        self.descriptor = descriptor
        self.time_fn = time_fn
        self._profiles: dict = {}
        self._pending: dict = {}
        self._lock = threading.RLock()
        self.prompts_emitted = 0

    # -- profile --------------------------------------------------------------

    def profile_entry(self, namespace: str, question: str) -> Optional[UserProfileEntry]:
        key = normalize_question(question)
        return self._profiles.get(namespace, {}).get(key)

    def store_profile(self, namespace: str, question: str, table: Table, ttl_seconds: int) -> None:
        key = normalize_question(question)
        with self._lock:
            self._profiles.setdefault(namespace, {})[key] = UserProfileEntry(
                key=key, value=table.to_obj(), asked_at=self.time_fn(), ttl_seconds=ttl_seconds
            )

    def expire_profile(self, namespace: str, question: str) -> None:
        """Force-stale an entry (test and maintenance hook)."""
        entry = self.profile_entry(namespace, question)
        if entry is not None:
            entry.asked_at = self.time_fn() - entry.ttl_seconds - 1

    def has_fresh_profile(self, namespace: str, question: str) -> bool:
        entry = self.profile_entry(namespace, question)
        return entry is not None and entry.fresh(self.time_fn())

    # -- query/answer cycle ------------------------------------------------------

    def query(
        self,
        session: Session,
        question: str,
        output_schema: Optional[Mapping[str, Any]] = None,
        properties: Optional[Mapping[str, Any]] = None,
        node_id: Optional[str] = None,
    ) -> DataBatch:
        """Return the stored fresh answer, or emit a prompt and suspend."""
        props = dict(properties or {})
        schema = dict(output_schema or {})
        namespace = session.profile_namespace
        entry = self.profile_entry(namespace, question)
        if entry is not None and entry.fresh(self.time_fn()):
            return DataBatch([Table.from_obj(entry.value)])
        ttl = int(props.get("ttl_seconds", DEFAULT_TTL_SECONDS))
        prompt = PendingPrompt(
            prompt_id=session.next_prompt_id(),
            question=question,
            normalized_key=normalize_question(question),
            output_schema=schema,
            ttl_seconds=ttl,
            namespace=namespace,
            node_id=node_id,
        )
        with self._lock:
            self._pending[prompt.prompt_id] = prompt
        self._emit_prompt(session, prompt)
        raise PromptPending(prompt)

    def _emit_prompt(self, session: Session, prompt: PendingPrompt) -> None:
        self.prompts_emitted += 1
        session.emit(
            "prompt",
            {
                "prompt_id": prompt.prompt_id,
                "question": prompt.question,
                "output_schema": prompt.output_schema,
            },
            node_id=prompt.node_id,
        )

    def pending(self, prompt_id: str) -> PendingPrompt:
        prompt = self._pending.get(prompt_id)
        if prompt is None:
            raise NotFoundError(f"no open prompt {prompt_id!r}")
        return prompt

    def provide_answer(self, session: Session, prompt_id: str, answer: Any) -> Table:
        """Verify an answer; store and return it, re-prompt, or fail after 3 tries."""
        prompt = self.pending(prompt_id)
        table = parse_answer(answer, prompt.output_schema)
        report = validate_schema(table, prompt.output_schema)
        if report.ok:
            with self._lock:
                del self._pending[prompt_id]
            self.store_profile(prompt.namespace, prompt.question, table, prompt.ttl_seconds)
            return table
        prompt.attempts += 1
        if prompt.attempts >= MAX_ANSWER_ATTEMPTS:
            with self._lock:
                del self._pending[prompt_id]
            raise VerificationError(
                f"answer to prompt {prompt_id} failed verification {prompt.attempts} times: {report.summary()}",
                detail=report.to_obj(),
            )
        self._emit_prompt(session, prompt)
        raise PromptPending(prompt)

    def describe_metadata(self) -> list:
        source_id = self.descriptor.source_id
        return [
            MetadataEntry(
                path=[source_id, "profile"],
                level="database",
                description="interactive user profile; answers cached with a freshness TTL",
            )
        ]


def parse_answer(answer: Any, output_schema: Mapping[str, Any]) -> Table:
    """Turn a raw user answer into a table.

    Structured JSON (objects or arrays of objects, possibly as text) is taken
    directly; free text becomes a single-row single-attribute table named
    after the schema's first attribute, coerced to its declared type when the
    text parses as one.
    """
    if isinstance(answer, str):
        stripped = answer.strip()
        if stripped.startswith("{") or stripped.startswith("["):
            try:
                answer = json.loads(stripped)
            except json.JSONDecodeError:
                pass
    if isinstance(answer, Mapping):
        return Table([dict(answer)])
    if isinstance(answer, list) and all(isinstance(r, Mapping) for r in answer):
        return Table([dict(r) for r in answer])
    attribute = next(iter(output_schema), "answer")
    declared = output_schema.get(attribute, "any")
    if not isinstance(declared, str):
        declared = declared.get("type", "any")
    return Table([{attribute: _coerce(answer, declared)}])


def _coerce(value: Any, declared: str) -> Any:
    if not isinstance(value, str):
        return value
    text = value.strip()
    try:
        if declared == "integer":
            return int(text)
        if declared in ("float", "number"):
            return float(text)
        if declared == "boolean":
            if text.lower() in ("true", "yes", "1"):
                return True
            if text.lower() in ("false", "no", "0"):
                return False
    except ValueError:
        pass
    return value
