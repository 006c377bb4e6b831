"""Sessions and streams: the transport for execution events and user prompts.

A session is the contextual boundary a plan executes in; each of its streams
is an ordered message channel with strictly increasing, gap-free sequence
numbers. Appends are serialized per stream so concurrent node events never
interleave partially.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass
from typing import Any, Optional

from .errors import CancellationError, ConflictError, NotFoundError

MESSAGE_KINDS = ("data", "control", "status", "prompt", "answer", "error")

DEFAULT_STREAM = "main"


@dataclass
class StreamMessage:
    seq: int
    kind: str
    payload: Any
    node_id: Optional[str] = None

    def to_obj(self) -> dict:
        obj = {"seq": self.seq, "kind": self.kind, "payload": self.payload}
        if self.node_id is not None:
            obj["node_id"] = self.node_id
        return obj


class Session:
    def __init__(self, session_id: str, profile_namespace: Optional[str] = None):
        self.session_id = session_id
        self.profile_namespace = profile_namespace or session_id
        self.created_at = time.time()
        self.closed = False
        self._streams: dict = {DEFAULT_STREAM: []}
        self._lock = threading.Lock()
        self._prompt_counter = 0

    def emit(self, kind: str, payload: Any, node_id: Optional[str] = None, stream_id: str = DEFAULT_STREAM) -> StreamMessage:
        if kind not in MESSAGE_KINDS:
            raise ValueError(f"unknown message kind {kind!r}")
        with self._lock:
            if self.closed:
                raise CancellationError(f"session {self.session_id} is closed")
            stream = self._streams.setdefault(stream_id, [])
            message = StreamMessage(seq=len(stream) + 1, kind=kind, payload=payload, node_id=node_id)
            stream.append(message)
            return message

    def messages(self, stream_id: str = DEFAULT_STREAM, after: int = 0) -> list:
        with self._lock:
            stream = self._streams.get(stream_id, [])
            return [m for m in stream if m.seq > after]

    def last_seq(self, stream_id: str = DEFAULT_STREAM) -> int:
        with self._lock:
            stream = self._streams.get(stream_id, [])
            return stream[-1].seq if stream else 0

    def next_prompt_id(self) -> str:
        with self._lock:
            self._prompt_counter += 1
            return f"{self.session_id}-p{self._prompt_counter}"

    def close(self) -> None:
        with self._lock:
            self.closed = True

    def to_obj(self) -> dict:
        with self._lock:
            return {
                "session_id": self.session_id,
                "created_at": self.created_at,
                "closed": self.closed,
                "streams": {sid: [m.to_obj() for m in msgs] for sid, msgs in self._streams.items()},
            }


class SessionManager:
    def __init__(self):
        self._sessions: dict = {}
        self._lock = threading.Lock()
        self._counter = 0

    def create(self, session_id: Optional[str] = None, profile_namespace: Optional[str] = None) -> Session:
        with self._lock:
            if session_id is None:
                self._counter += 1
                session_id = f"s{self._counter:04d}"
            if session_id in self._sessions:
                raise ConflictError(f"session {session_id!r} already exists")
            session = Session(session_id, profile_namespace)
            self._sessions[session_id] = session
            return session

    def get(self, session_id: str) -> Session:
        session = self._sessions.get(session_id)
        if session is None:
            raise NotFoundError(f"session {session_id!r} not found")
        return session

    def get_or_create(self, session_id: Optional[str]) -> Session:
        if session_id is None:
            return self.create()
        with self._lock:
            existing = self._sessions.get(session_id)
        if existing is not None:
            return existing
        return self.create(session_id)

    def list_ids(self) -> list:
        return sorted(self._sessions)
