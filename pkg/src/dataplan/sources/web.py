"""Web source: on-demand structured extraction from documents.

The fetcher is pluggable; the default reads a local fixture corpus keyed by
URL (via an ``index.json`` map or literal file names), so extraction stays
deterministic offline. A live HTTP fetcher exists but is off by default.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Mapping, Optional

from ..data import DataBatch, Table
from ..errors import ConnectivityError, NotFoundError
from ..registry import MetadataEntry, SourceDescriptor

_EXTRACT_INSTRUCTION = (
    "Extract rows matching the output schema from the document below. "
    "Use null for attributes the document does not mention.\n"
    "Document:\n{document}"
)


class FixtureFetcher:
    """Reads documents from a local corpus directory."""

    def __init__(self, corpus_dir):
        self.corpus_dir = Path(corpus_dir)
        index_path = self.corpus_dir / "index.json"
        self.index = {}
        if index_path.exists():
            self.index = json.loads(index_path.read_text(encoding="utf-8"))

    def fetch(self, key: str) -> str:
        filename = self.index.get(key)
        if filename is None:
            candidate = self.corpus_dir / key
            if candidate.is_file() and candidate.parent == self.corpus_dir:
                filename = key
        if filename is None:
            raise NotFoundError(f"no fixture document for key {key!r}")
        return (self.corpus_dir / filename).read_text(encoding="utf-8")


class HttpFetcher:
    """Live fetcher; only used when explicitly configured."""

    def __init__(self, timeout: float = 30.0):
        self.timeout = timeout

    def fetch(self, key: str) -> str:
        import httpx

        try:
            response = httpx.get(key, timeout=self.timeout, follow_redirects=True)
        except httpx.HTTPError as exc:
            raise ConnectivityError(f"fetch failed for {key!r}: {exc}") from exc
        if response.status_code != 200:
            raise ConnectivityError(f"fetch for {key!r} returned HTTP {response.status_code}")
        return response.text


class WebSource:
    protocol = "web"

    def __init__(self, descriptor: SourceDescriptor, fetcher, llm_source):
        self.descriptor = descriptor
        self.fetcher = fetcher
        self.llm_source = llm_source

    def extract(
        self,
        key: str,
        output_schema: Mapping[str, Any],
        properties: Optional[Mapping[str, Any]] = None,
    ) -> DataBatch:
        """Schema-guided extraction of one document into a verified table."""
        document = self.fetcher.fetch(key)
        if not document.strip():
            return DataBatch([Table([])])
        question = _EXTRACT_INSTRUCTION.format(document=document)
        batch = self.llm_source.query(question, output_schema, properties)
        rows = []
        for row in batch.rows(0):
            filled = dict(row)
            for name in output_schema:
                filled.setdefault(name, None)
            rows.append(filled)
        return DataBatch([Table(rows)])

    def describe_metadata(self) -> list:
        source_id = self.descriptor.source_id
        return [
            MetadataEntry(
                path=[source_id, "documents"],
                level="database",
                description="on-demand structured extraction from fetched documents",
            )
        ]
