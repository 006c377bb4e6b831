import hashlib
import math
import random
from pathlib import Path

import pytest

from dataplan.embedding import DIMENSIONS, cosine, embed, tokenize
from dataplan.errors import ConflictError, DataError, NotFoundError
from dataplan.registry import (
    DataRegistry,
    MetadataEntry,
    SourceDescriptor,
    substitute_env,
)
from dataplan.sources import RelationalSource

JOBS_FIXTURE = str(Path(__file__).parent.parent / "fixtures" / "jobs.json")


def _hash_dim(token: str) -> int:
    return int.from_bytes(hashlib.sha256(token.encode()).digest()[:8], "big") % 64


def test_embed_empty_is_zero_vector():
    assert embed("") == [0.0] * DIMENSIONS


def test_embed_token_counts_and_normalization():
    # "c" and "d" land in distinct dimensions under the chosen hash.
    dim_c, dim_d = _hash_dim("c"), _hash_dim("d")
    assert dim_c != dim_d
    vector = embed("c d c")
    assert vector[dim_c] == pytest.approx(2 / math.sqrt(5))
    assert vector[dim_d] == pytest.approx(1 / math.sqrt(5))


def test_embed_colliding_tokens_accumulate():
    # "a" and "b" collide under the chosen hash; all mass in one dimension.
    assert _hash_dim("a") == _hash_dim("b")
    vector = embed("a b a")
    assert vector[_hash_dim("a")] == pytest.approx(1.0)


def test_embed_norm_is_zero_or_one():
    rng = random.Random(5)
    for _ in range(50):
        text = " ".join(rng.choice(["job", "data", "x1", "", "rent trends"]) for _ in range(3))
        norm = math.sqrt(sum(x * x for x in embed(text)))
        assert norm == 0.0 or abs(norm - 1.0) < 1e-9


def test_tokenize_splits_non_alphanumerics():
    assert tokenize("Jobs DB, main.jobs!") == ["jobs", "db", "main", "jobs"]


def _registry_with_jobs():
    registry = DataRegistry()
    descriptor = SourceDescriptor(
        source_id="jobs_db",
        protocol="relational",
        connection={"database": "main", "tables": JOBS_FIXTURE},
        description="job postings database",
    )
    registry.register_source(descriptor)
    adapter = RelationalSource(descriptor)
    registry.set_adapter_provider(lambda sid: adapter)
    return registry


def test_register_source_creates_root_entry():
    registry = _registry_with_jobs()
    root = registry.get_entry(["jobs_db"])
    assert root.level == "source"
    assert registry.subtree("jobs_db") == [root]


def test_register_duplicate_source_conflicts():
    registry = _registry_with_jobs()
    with pytest.raises(ConflictError):
        registry.register_source(SourceDescriptor(source_id="jobs_db", protocol="relational"))


def test_list_sources_sorted_all_protocols():
    registry = DataRegistry()
    for sid, protocol in [
        ("w", "web"),
        ("r", "relational"),
        ("v", "vector"),
        ("u", "user"),
        ("l", "llm"),
    ]:
        registry.register_source(SourceDescriptor(source_id=sid, protocol=protocol))
    assert [d.source_id for d in registry.list_sources()] == ["l", "r", "u", "v", "w"]


def test_sync_jobs_fixture_counts():
    registry = _registry_with_jobs()
    registry.sync_source("jobs_db")
    entries = registry.subtree("jobs_db")
    collections = [e for e in entries if e.level == "collection"]
    attributes = [e for e in entries if e.level == "attribute"]
    assert len(collections) == 1
    assert collections[0].statistics["row_count"] == 12
    assert len(attributes) == 5
    for attribute in attributes:
        stats = attribute.statistics
        assert stats["row_count"] == 12
        assert stats["distinct_count"] <= stats["row_count"]
        assert len(attribute.samples) <= 5


def test_sync_statistics_min_le_max():
    registry = _registry_with_jobs()
    registry.sync_source("jobs_db")
    for entry in registry.subtree("jobs_db"):
        if entry.level != "attribute":
            continue
        vmin, vmax = entry.statistics.get("min"), entry.statistics.get("max")
        if vmin is not None and vmax is not None and type(vmin) is type(vmax):
            assert vmin <= vmax


def test_sync_twice_is_byte_identical():
    registry = _registry_with_jobs()
    registry.sync_source("jobs_db")
    first = registry.subtree_canonical("jobs_db")
    registry.sync_source("jobs_db")
    second = registry.subtree_canonical("jobs_db")
    assert first == second


def test_sync_empty_database():
    registry = DataRegistry()
    descriptor = SourceDescriptor(source_id="empty_db", protocol="relational", connection={})
    registry.register_source(descriptor)
    adapter = RelationalSource(descriptor)
    registry.set_adapter_provider(lambda sid: adapter)
    registry.sync_source("empty_db")
    levels = [e.level for e in registry.subtree("empty_db")]
    assert "collection" not in levels


def test_duplicate_path_rejected():
    registry = _registry_with_jobs()
    with pytest.raises(ConflictError):
        registry.insert_entry(MetadataEntry(path=["jobs_db"], level="source"))


def test_path_depth_must_match_level():
    with pytest.raises(DataError):
        MetadataEntry(path=["a", "b"], level="source")
    with pytest.raises(DataError):
        MetadataEntry(path=["a"], level="attribute")


def test_search_exact_name_ranks_first():
    registry = _registry_with_jobs()
    registry.sync_source("jobs_db")
    hits = registry.search_metadata("jobs", top_k=5)
    assert hits[0].entry.level == "collection"
    assert hits[0].entry.path == ["jobs_db", "main", "jobs"]
    assert hits[0].exact


def test_search_empty_registry():
    registry = DataRegistry()
    assert registry.search_metadata("anything", top_k=3) == []


def test_search_level_filter():
    registry = _registry_with_jobs()
    registry.sync_source("jobs_db")
    hits = registry.search_metadata("jobs", level_filter="attribute", top_k=10)
    assert hits and all(h.entry.level == "attribute" for h in hits)


def test_search_ranking_matches_recomputed_scores():
    # Independent recomputation of the documented blend:
    # 0.5 * |Q ∩ E| / |Q|  +  0.5 * cosine(embed(q), entry.embedding),
    # exact path-component matches first, ties by path.
    rng = random.Random(11)
    registry = DataRegistry()
    registry.register_source(SourceDescriptor(source_id="synth", protocol="vector"))
    words = ["rent", "jobs", "title", "alpha", "beta", "gamma", "delta", "salary"]
    for i in range(50):
        description = " ".join(rng.choice(words) for _ in range(4))
        registry.insert_entry(
            MetadataEntry(path=["synth", "db", f"col{i:02d}"], level="collection", description=description)
        )
    query = "jobs salary"
    hits = registry.search_metadata(query, top_k=100)  # registry holds 51 entries

    q_tokens = set(tokenize(query))
    q_vec = embed(query)
    expected = []
    for entry in registry.entries():
        text = " ".join(entry.path) + " " + entry.description
        keyword = len(q_tokens & set(tokenize(text))) / max(1, len(q_tokens))
        score = 0.5 * keyword + 0.5 * cosine(q_vec, entry.embedding)
        exact = query.strip().lower() == entry.path[-1].lower()
        expected.append((not exact, -score, entry.path))
    expected.sort()
    assert [h.entry.path for h in hits] == [path for _, _, path in expected]


def test_search_determinism_across_instances():
    r1 = _registry_with_jobs()
    r1.sync_source("jobs_db")
    r2 = DataRegistry.from_obj(r1.to_obj())
    q = "data scientist title"
    first = [(h.entry.path, h.score) for h in r1.search_metadata(q, top_k=10)]
    second = [(h.entry.path, h.score) for h in r2.search_metadata(q, top_k=10)]
    assert first == second


def test_registry_round_trips_through_obj():
    registry = _registry_with_jobs()
    registry.sync_source("jobs_db")
    clone = DataRegistry.from_obj(registry.to_obj())
    assert clone.subtree_canonical("jobs_db") == registry.subtree_canonical("jobs_db")


def test_env_substitution(monkeypatch):
    monkeypatch.setenv("DATAPLAN_TEST_KEY", "sekrit")
    resolved = substitute_env({"api_key": "${DATAPLAN_TEST_KEY}", "nested": ["${DATAPLAN_TEST_KEY}"]})
    assert resolved == {"api_key": "sekrit", "nested": ["sekrit"]}


def test_env_substitution_missing_var():
    from dataplan.errors import BadRequestError

    with pytest.raises(BadRequestError):
        substitute_env("${DATAPLAN_DOES_NOT_EXIST}")


def test_unknown_source_not_found():
    registry = DataRegistry()
    with pytest.raises(NotFoundError):
        registry.get_source("nope")
