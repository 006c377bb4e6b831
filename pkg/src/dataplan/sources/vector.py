"""In-memory vector store with exact top-k cosine search."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional

from .. import embedding
from ..data import DataBatch, Table
from ..errors import BadRequestError, DataError, NotFoundError
from ..registry import MetadataEntry, SourceDescriptor


class VectorSource:
    protocol = "vector"

    def __init__(self, descriptor: SourceDescriptor, connection: Optional[Mapping[str, Any]] = None):
        self.descriptor = descriptor
        self._collections: dict = {}
        conn = dict(connection if connection is not None else descriptor.connection)
        fixture = conn.get("collections")
        if isinstance(fixture, (str, Path)):
            fixture = json.loads(Path(fixture).read_text(encoding="utf-8"))
        if fixture:
            self.load_collections(fixture)

    def create_collection(self, name: str, dimension: int) -> None:
        if name in self._collections:
            raise BadRequestError(f"collection {name!r} already exists")
        if dimension < 1:
            raise BadRequestError("dimension must be >= 1")
        self._collections[name] = {"dimension": dimension, "items": {}}

    def add_items(self, collection: str, items: Iterable[Mapping[str, Any]]) -> None:
        col = self._collection(collection)
        for item in items:
            vector = item.get("vector")
            if vector is None and "embed_text" in item:
                vector = embedding.embed(item["embed_text"])
            if vector is None or len(vector) != col["dimension"]:
                raise DataError(
                    f"item {item.get('id')!r} vector dimension mismatch for collection {collection!r}"
                )
            item_id = str(item["id"])
            col["items"][item_id] = ([float(x) for x in vector], dict(item.get("payload", {})))

    def load_collections(self, fixture: Iterable[Mapping[str, Any]]) -> None:
        """Fixture format: ``[{name, dimension?, items: [{id, vector|embed_text, payload}]}]``.

        When items carry ``embed_text`` the collection defaults to the hashing
        embedder's dimension so text queries and stored vectors line up.
        """
        for col in fixture:
            dimension = col.get("dimension", embedding.DIMENSIONS)
            self.create_collection(col["name"], dimension)
            self.add_items(col["name"], col.get("items", []))

    def _collection(self, name: str) -> dict:
        col = self._collections.get(name)
        if col is None:
            raise NotFoundError(f"collection {name!r} not found in {self.descriptor.source_id!r}")
        return col

    def collection_names(self) -> list:
        return sorted(self._collections)

    def query(self, collection: str, query_vector: list, k: int) -> DataBatch:
        """Top-k by cosine similarity, descending; ties break by ascending id."""
        if k < 1:
            raise BadRequestError("k must be >= 1")
        col = self._collection(collection)
        if len(query_vector) != col["dimension"]:
            raise BadRequestError(
                f"query vector has dimension {len(query_vector)}, collection expects {col['dimension']}"
            )
        scored = []
        for item_id, (vector, payload) in col["items"].items():
            scored.append((embedding.cosine(query_vector, vector), item_id, payload))
        scored.sort(key=lambda t: (-t[0], t[1]))
        rows = []
        for score, item_id, payload in scored[:k]:
            row = dict(payload)
            row["_score"] = score
            rows.append(row)
        return DataBatch([Table(rows)])

    def describe_metadata(self) -> list:
        source_id = self.descriptor.source_id
        entries = [
            MetadataEntry(
                path=[source_id, "vectors"],
                level="database",
                description="vector index store",
            )
        ]
        for name in self.collection_names():
            col = self._collections[name]
            entries.append(
                MetadataEntry(
                    path=[source_id, "vectors", name],
                    level="collection",
                    description=f"vector collection {name}, dimension {col['dimension']}",
                    statistics={"row_count": len(col["items"])},
                )
            )
        return entries
