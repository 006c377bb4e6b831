"""Data registry: hierarchical source metadata, sync, and search.

The registry is the catalog the planner and operators consult to discover
sources, collections and attributes. Entries form a tree keyed by path;
levels map to fixed path depths so paths stay storage-independent.
"""

from __future__ import annotations

import os
import re
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Mapping, Optional

from . import embedding
from .data import canonical_json, validate_value
from .errors import BadRequestError, ConflictError, DataError, NotFoundError

LEVELS = ("source", "database", "collection", "entity", "relation", "attribute", "value")

# Path depth per level. Entities and relations sit beside attributes under a
# collection; values hang off the attribute they belong to.
LEVEL_DEPTH = {
    "source": 1,
    "database": 2,
    "collection": 3,
    "entity": 4,
    "relation": 4,
    "attribute": 4,
    "value": 5,
}

PROTOCOLS = ("relational", "vector", "llm", "user", "web")

_ENV_REF = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}")


@dataclass
class MetadataEntry:
    """One node of a source's metadata tree."""

    path: list
    level: str
    description: str = ""
    samples: list = field(default_factory=list)
    statistics: dict = field(default_factory=dict)
    embedding: list = field(default_factory=list)

    def __post_init__(self):
        if self.level not in LEVELS:
            raise DataError(f"unknown metadata level {self.level!r}")
        if not self.path or not all(isinstance(p, str) and p for p in self.path):
            raise DataError(f"metadata path must be non-empty strings: {self.path!r}")
        if len(self.path) != LEVEL_DEPTH[self.level]:
            raise DataError(
                f"level {self.level!r} requires path depth {LEVEL_DEPTH[self.level]}, got {self.path!r}"
            )
        if len(self.samples) > 5:
            raise DataError(f"at most 5 samples per entry, got {len(self.samples)}")
        for sample in self.samples:
            validate_value(sample)
        rc = self.statistics.get("row_count")
        dc = self.statistics.get("distinct_count")
        if rc is not None and dc is not None and dc > rc:
            raise DataError(f"distinct_count {dc} exceeds row_count {rc} at {self.path}")
        if not self.embedding:
            self.embedding = embedding.embed(" ".join(self.path) + " " + self.description)
        elif len(self.embedding) != embedding.DIMENSIONS:
            raise DataError(f"embedding must have {embedding.DIMENSIONS} dimensions")

    @property
    def key(self) -> tuple:
        return tuple(self.path)

    def search_text(self) -> str:
        return " ".join(self.path) + " " + self.description

    def to_obj(self) -> dict:
        return {
            "path": self.path,
            "level": self.level,
            "description": self.description,
            "samples": self.samples,
            "statistics": self.statistics,
            "embedding": self.embedding,
        }

    @classmethod
    def from_obj(cls, obj: Mapping[str, Any]) -> "MetadataEntry":
        return cls(
            path=list(obj["path"]),
            level=obj["level"],
            description=obj.get("description", ""),
            samples=list(obj.get("samples", [])),
            statistics=dict(obj.get("statistics", {})),
            embedding=list(obj.get("embedding", [])),
        )


@dataclass
class SourceDescriptor:
    """Registration record for one data source."""

    source_id: str
    protocol: str
    connection: dict = field(default_factory=dict)
    natural_language_capable: bool = False
    description: str = ""

    def __post_init__(self):
        if not self.source_id or not isinstance(self.source_id, str):
            raise DataError("source_id must be a non-empty string")
        if self.protocol not in PROTOCOLS:
            raise DataError(f"unknown protocol {self.protocol!r}; expected one of {PROTOCOLS}")

    def to_obj(self) -> dict:
        return {
            "source_id": self.source_id,
            "protocol": self.protocol,
            "connection": self.connection,
            "natural_language_capable": self.natural_language_capable,
            "description": self.description,
        }

    @classmethod
    def from_obj(cls, obj: Mapping[str, Any]) -> "SourceDescriptor":
        return cls(
            source_id=obj["source_id"],
            protocol=obj["protocol"],
            connection=dict(obj.get("connection", {})),
            natural_language_capable=bool(obj.get("natural_language_capable", False)),
            description=obj.get("description", ""),
        )


def substitute_env(value: Any) -> Any:
    """Resolve ``${NAME}`` references in connection strings from the environment."""
    if isinstance(value, str):
        def repl(m):
            name = m.group(1)
            if name not in os.environ:
                raise BadRequestError(f"environment variable {name} referenced by connection is not set")
            return os.environ[name]

        return _ENV_REF.sub(repl, value)
    if isinstance(value, dict):
        return {k: substitute_env(v) for k, v in value.items()}
    if isinstance(value, list):
        return [substitute_env(v) for v in value]
    return value


@dataclass
class SearchHit:
    entry: MetadataEntry
    score: float
    exact: bool

    def to_obj(self) -> dict:
        obj = self.entry.to_obj()
        obj["score"] = self.score
        obj["exact"] = self.exact
        return obj


class DataRegistry:
    """Catalog of sources and their metadata trees.

    Writes (register/sync) are serialized by a registry-wide lock; reads see
    either the pre- or post-write snapshot since subtrees are swapped whole.
    """

    def __init__(self):
        self._lock = threading.RLock()
        self._sources: dict = {}
        self._entries: dict = {}
        self._sync_log: dict = {}
        self._adapter_provider: Optional[Callable[[str], Any]] = None

    def set_adapter_provider(self, provider: Callable[[str], Any]) -> None:
        """Install the engine hook used by sync to reach source adapters."""
        self._adapter_provider = provider

    # -- sources -----------------------------------------------------------

    def register_source(self, descriptor: SourceDescriptor) -> str:
        with self._lock:
            if descriptor.source_id in self._sources:
                raise ConflictError(f"source {descriptor.source_id!r} is already registered")
            self._sources[descriptor.source_id] = descriptor
            root = MetadataEntry(
                path=[descriptor.source_id],
                level="source",
                description=descriptor.description or f"{descriptor.protocol} source",
            )
            self._entries[root.key] = root
            return descriptor.source_id

    def get_source(self, source_id: str) -> SourceDescriptor:
        descriptor = self._sources.get(source_id)
        if descriptor is None:
            raise NotFoundError(f"source {source_id!r} is not registered")
        return descriptor

    def has_source(self, source_id: str) -> bool:
        return source_id in self._sources

    def list_sources(self) -> list:
        return [self._sources[sid] for sid in sorted(self._sources)]

    def sources_by_protocol(self, protocol: str) -> list:
        return [d for d in self.list_sources() if d.protocol == protocol]

    # -- entries -----------------------------------------------------------

    def insert_entry(self, entry: MetadataEntry) -> None:
        with self._lock:
            if entry.key in self._entries:
                raise ConflictError(f"metadata path {entry.path} already exists")
            self._entries[entry.key] = entry

    def get_entry(self, path: Iterable[str]) -> MetadataEntry:
        entry = self._entries.get(tuple(path))
        if entry is None:
            raise NotFoundError(f"no metadata entry at {list(path)}")
        return entry

    def subtree(self, source_id: str) -> list:
        """All entries under a source root, sorted by path."""
        self.get_source(source_id)
        return sorted(
            (e for e in self._entries.values() if e.path[0] == source_id),
            key=lambda e: e.path,
        )

    def entries(self) -> list:
        return sorted(self._entries.values(), key=lambda e: e.path)

    def __len__(self) -> int:
        return len(self._entries)

    def subtree_canonical(self, source_id: str) -> str:
        return canonical_json([e.to_obj() for e in self.subtree(source_id)])

    # -- sync ----------------------------------------------------------------

    def sync_source(self, source_id: str) -> list:
        """Replace a source's metadata subtree from its adapter, atomically.

        The candidate subtree is fully built and validated before the swap, so
        a failed sync leaves the previous tree untouched.
        """
        descriptor = self.get_source(source_id)
        if self._adapter_provider is None:
            raise BadRequestError("registry has no adapter provider configured")
        adapter = self._adapter_provider(source_id)
        fresh = list(adapter.describe_metadata())
        candidate: dict = {}
        for entry in fresh:
            if entry.path[0] != source_id:
                raise DataError(f"sync produced entry outside source subtree: {entry.path}")
            if entry.key in candidate:
                raise DataError(f"sync produced duplicate path {entry.path}")
            candidate[entry.key] = entry
        root = MetadataEntry(
            path=[source_id],
            level="source",
            description=descriptor.description or f"{descriptor.protocol} source",
        )
        with self._lock:
            stale = [key for key in self._entries if key[0] == source_id]
            for key in stale:
                del self._entries[key]
            self._entries[root.key] = root
            self._entries.update(candidate)
            log = self._sync_log.setdefault(source_id, {"sync_count": 0, "last_sync": None})
            log["sync_count"] += 1
            log["last_sync"] = time.time()
        return self.subtree(source_id)

    def sync_log(self, source_id: str) -> dict:
        return dict(self._sync_log.get(source_id, {"sync_count": 0, "last_sync": None}))

    # -- search --------------------------------------------------------------

    def search_metadata(self, query: str, level_filter: Optional[str] = None, top_k: int = 10) -> list:
        """Rank entries by a 50/50 keyword/embedding blend.

        Keyword score is normalized token overlap between the query and the
        entry's path+description; an entry whose own name (last path
        component) equals the query outranks every non-exact entry. Ties
        break by lexicographic path.
        """
        if top_k < 1:
            raise BadRequestError("top_k must be >= 1")
        if level_filter is not None and level_filter not in LEVELS:
            raise BadRequestError(f"unknown level {level_filter!r}")
        query_tokens = set(embedding.tokenize(query))
        query_vec = embedding.embed(query)
        needle = query.strip().lower()
        hits = []
        for entry in self._entries.values():
            if level_filter is not None and entry.level != level_filter:
                continue
            entry_tokens = set(embedding.tokenize(entry.search_text()))
            keyword = len(query_tokens & entry_tokens) / max(1, len(query_tokens))
            score = 0.5 * keyword + 0.5 * embedding.cosine(query_vec, entry.embedding)
            exact = needle == entry.path[-1].lower()
            hits.append(SearchHit(entry=entry, score=score, exact=exact))
        hits.sort(key=lambda h: (not h.exact, -h.score, h.entry.path))
        return hits[:top_k]

    # -- persistence -----------------------------------------------------------

    def to_obj(self) -> dict:
        return {
            "sources": {sid: d.to_obj() for sid, d in self._sources.items()},
            "entries": [e.to_obj() for e in self.entries()],
            "sync_log": self._sync_log,
        }

    @classmethod
    def from_obj(cls, obj: Mapping[str, Any]) -> "DataRegistry":
        registry = cls()
        for sid in sorted(obj.get("sources", {})):
            registry._sources[sid] = SourceDescriptor.from_obj(obj["sources"][sid])
        for entry_obj in obj.get("entries", []):
            entry = MetadataEntry.from_obj(entry_obj)
            registry._entries[entry.key] = entry
        registry._sync_log = {k: dict(v) for k, v in obj.get("sync_log", {}).items()}
        return registry
