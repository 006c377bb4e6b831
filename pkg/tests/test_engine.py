import json
import threading

import pytest

from dataplan.data import Table
from dataplan.engine import Engine
from dataplan.errors import CancellationError, NotFoundError

from conftest import BAY_AREA_QUESTION, FIXTURES, USER_ANSWER, USER_QUESTION, build_engine


def test_registries_persist_atomically_and_reload(tmp_path):
    config = json.loads((FIXTURES / "config.json").read_text())
    config["registry_dir"] = str(tmp_path / "state")
    engine = Engine(config, base_dir=FIXTURES)
    engine.sync_all()
    engine.save_registries()

    data_file = tmp_path / "state" / "data_registry.json"
    op_file = tmp_path / "state" / "operator_registry.json"
    assert data_file.exists() and op_file.exists()
    assert not list((tmp_path / "state").glob("*.tmp"))

    persisted = json.loads(data_file.read_text())
    assert "jobs_db" in persisted["sources"]
    assert persisted["sync_log"]["jobs_db"]["sync_count"] == 1

    ops = json.loads(op_file.read_text())
    assert "question_answer" in ops["operators"]

    # A second engine starting from the same directory sees the synced tree
    # without re-syncing.
    engine2 = Engine(config, base_dir=FIXTURES)
    assert engine2.registry.subtree_canonical("jobs_db") == engine.registry.subtree_canonical("jobs_db")


def test_node_cache_persists_between_engines(tmp_path):
    config = json.loads((FIXTURES / "config.json").read_text())
    config["registry_dir"] = str(tmp_path / "state")
    engine = Engine(config, base_dir=FIXTURES)
    engine.sync_all()
    session = engine.create_session()
    user = engine.adapter("user_main")
    user.store_profile(session.profile_namespace, USER_QUESTION, Table([USER_ANSWER]), 86400)
    plan, record = engine.answer_question(session, BAY_AREA_QUESTION)
    assert record.status == "done"
    engine.save_registries()

    engine2 = Engine(config, base_dir=FIXTURES)
    assert engine2.executor.cache_size() == engine.executor.cache_size() > 0


def test_session_closed_while_suspended_cancels_resume(engine):
    session = engine.create_session()
    plan, record = engine.answer_question(session, BAY_AREA_QUESTION)
    assert record.status == "suspended"
    prompt = [m for m in session.messages() if m.kind == "prompt"][0]
    session.close()
    with pytest.raises(CancellationError):
        engine.executor.resume_with_answer(session, prompt.payload["prompt_id"], USER_ANSWER)


def test_concurrent_registry_reads_during_sync(engine):
    errors = []

    def reader():
        try:
            for _ in range(50):
                hits = engine.registry.search_metadata("jobs", top_k=3)
                assert hits, "reader must always see a complete snapshot"
        except Exception as exc:  # noqa: BLE001 - collected for the main thread
            errors.append(exc)

    def writer():
        try:
            for _ in range(10):
                engine.registry.sync_source("jobs_db")
        except Exception as exc:  # noqa: BLE001
            errors.append(exc)

    threads = [threading.Thread(target=reader) for _ in range(3)] + [threading.Thread(target=writer)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert errors == []


def test_engine_requires_config_for_default_constructor(monkeypatch):
    monkeypatch.delenv("DIL_CONFIG", raising=False)
    from dataplan.errors import BadRequestError

    with pytest.raises(BadRequestError):
        Engine.from_default_config()


def test_engine_from_env_config(monkeypatch):
    monkeypatch.setenv("DIL_CONFIG", str(FIXTURES / "config.json"))
    engine = Engine.from_default_config()
    assert engine.registry.has_source("jobs_db")


def test_unknown_adapter_not_found(engine):
    with pytest.raises(NotFoundError):
        engine.adapter("missing")
