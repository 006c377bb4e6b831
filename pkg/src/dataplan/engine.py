"""Engine wiring: config, registries, adapters, sessions, planner, executor.

A single JSON config file declares the sources (with fixture paths), stub
mappings, cost-model overrides and the default optimization objective. The
``DIL_CONFIG`` environment variable names the default config path.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import replace
from pathlib import Path
from typing import Any, Mapping, Optional

from .context import ExecutionContext
from .errors import BadRequestError, ConflictError, NotFoundError
from .executor import ExecutionRecord, Executor
from .opregistry import OperatorRegistry
from .operators import build_catalog
from .planner import DataPlan, Objective, Planner
from .registry import DataRegistry, SourceDescriptor, substitute_env
from .sessions import Session, SessionManager
from .sources import (
    DeterministicStubBackend,
    FixtureFetcher,
    HttpChatBackend,
    HttpFetcher,
    LlmSource,
    RelationalSource,
    UserSource,
    VectorSource,
    WebSource,
)

CONFIG_ENV_VAR = "DIL_CONFIG"

DATA_REGISTRY_FILE = "data_registry.json"
OPERATOR_REGISTRY_FILE = "operator_registry.json"
NODE_CACHE_FILE = "node_cache.json"


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=str(path.parent), prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class Engine:
    """One registry + adapter + session universe."""

    def __init__(self, config: Optional[Mapping[str, Any]] = None, base_dir: Optional[Path] = None):
        self.config = dict(config or {})
        self.base_dir = Path(base_dir) if base_dir else Path.cwd()
        self.registry = DataRegistry()
        self.operators = build_catalog(OperatorRegistry())
        self.adapters: dict = {}
        self.sessions = SessionManager()
        self.registry.set_adapter_provider(self.adapter)
        self.ctx = ExecutionContext(registry=self.registry, operators=self.operators, adapters=self.adapters)
        self.planner = Planner(self.ctx, cost_model=self.config.get("cost_model"))
        self.executor = Executor(self.ctx)
        self.default_objective = Objective.from_obj(self.config.get("default_objective"))
        for source_conf in self.config.get("sources", []):
            self.add_source(source_conf)
        registry_dir = self.registry_dir()
        if registry_dir is not None:
            self._load_persisted(registry_dir)

    @classmethod
    def from_config_file(cls, path) -> "Engine":
        path = Path(path)
        config = json.loads(path.read_text(encoding="utf-8"))
        return cls(config, base_dir=path.parent)

    @classmethod
    def from_default_config(cls) -> "Engine":
        path = os.environ.get(CONFIG_ENV_VAR)
        if not path:
            raise BadRequestError(f"no config file given and {CONFIG_ENV_VAR} is not set")
        return cls.from_config_file(path)

    def registry_dir(self) -> Optional[Path]:
        configured = self.config.get("registry_dir")
        if not configured:
            return None
        return self._resolve_path(configured)

    def _resolve_path(self, value: str) -> Path:
        path = Path(value)
        return path if path.is_absolute() else self.base_dir / path

    # -- sources -------------------------------------------------------------

    def add_source(self, source_conf: Mapping[str, Any]) -> str:
        descriptor = SourceDescriptor.from_obj(source_conf)
        self.registry.register_source(descriptor)
        self.adapters[descriptor.source_id] = self._build_adapter(descriptor)
        return descriptor.source_id

    def _build_adapter(self, descriptor: SourceDescriptor):
        connection = substitute_env(descriptor.connection)
        protocol = descriptor.protocol
        if protocol == "relational":
            if isinstance(connection.get("tables"), str):
                connection["tables"] = str(self._resolve_path(connection["tables"]))
            return RelationalSource(descriptor, connection)
        if protocol == "vector":
            if isinstance(connection.get("collections"), str):
                connection["collections"] = str(self._resolve_path(connection["collections"]))
            return VectorSource(descriptor, connection)
        if protocol == "llm":
            backend_kind = connection.get("backend", "stub")
            if backend_kind == "stub":
                mapping = connection.get("mapping", [])
                if isinstance(mapping, str):
                    backend = DeterministicStubBackend.from_file(self._resolve_path(mapping))
                else:
                    backend = DeterministicStubBackend(mapping)
            elif backend_kind == "http":
                backend = HttpChatBackend(
                    base_url=connection["base_url"],
                    model=connection.get("model", ""),
                    api_key=connection.get("api_key", ""),
                )
            else:
                raise BadRequestError(f"unknown llm backend {backend_kind!r}")
            return LlmSource(descriptor, backend)
        if protocol == "user":
            return UserSource(descriptor)
        if protocol == "web":
            if connection.get("fetcher", "fixture") == "http":
                fetcher = HttpFetcher()
            else:
                fetcher = FixtureFetcher(self._resolve_path(connection.get("corpus", "web")))
            llm_id = connection.get("llm_source")
            if llm_id is None:
                llm_id = self.ctx.first_source("llm")
            llm = self.adapters.get(llm_id)
            if llm is None:
                raise NotFoundError(f"web source references unknown llm source {llm_id!r}")
            return WebSource(descriptor, fetcher, llm)
        raise BadRequestError(f"unknown protocol {protocol!r}")

    def adapter(self, source_id: str):
        adapter = self.adapters.get(source_id)
        if adapter is None:
            raise NotFoundError(f"no adapter for source {source_id!r}")
        return adapter

    def sync_all(self) -> None:
        for descriptor in self.registry.list_sources():
            self.registry.sync_source(descriptor.source_id)

    # -- sessions ----------------------------------------------------------------

    def create_session(self, session_id: Optional[str] = None) -> Session:
        return self.sessions.create(session_id)

    def session_ctx(self, session: Session) -> ExecutionContext:
        return replace(self.ctx, session=session)

    # -- end to end -----------------------------------------------------------------

    def answer_question(
        self,
        session: Session,
        question: str,
        objective: Optional[Mapping[str, Any]] = None,
        options: Optional[Mapping[str, Any]] = None,
    ) -> tuple:
        """instantiate -> refine -> optimize -> execute, returning (plan, record)."""
        planner = Planner(self.session_ctx(session), cost_model=self.config.get("cost_model"))
        plan = planner.instantiate("question_answer", {"question": question})
        plan = planner.refine(plan)
        target = Objective.from_obj(objective) if objective else self.default_objective
        plan = planner.optimize(plan, target)
        record = self.executor.execute(plan, session, options)
        return plan, record

    def execute_plan(self, plan: DataPlan, session: Session,
                     options: Optional[Mapping[str, Any]] = None) -> ExecutionRecord:
        return self.executor.execute(plan, session, options)

    # -- persistence ---------------------------------------------------------------

    def save_registries(self) -> None:
        registry_dir = self.registry_dir()
        if registry_dir is None:
            return
        atomic_write(
            registry_dir / DATA_REGISTRY_FILE,
            json.dumps(self.registry.to_obj(), indent=2, sort_keys=True),
        )
        atomic_write(
            registry_dir / OPERATOR_REGISTRY_FILE,
            json.dumps(self.operators.to_obj(), indent=2, sort_keys=True),
        )
        atomic_write(
            registry_dir / NODE_CACHE_FILE,
            json.dumps(self.executor.cache_to_obj(), sort_keys=True),
        )

    def _load_persisted(self, registry_dir: Path) -> None:
        data_path = registry_dir / DATA_REGISTRY_FILE
        if data_path.exists():
            persisted = DataRegistry.from_obj(json.loads(data_path.read_text(encoding="utf-8")))
            for descriptor in persisted.list_sources():
                if not self.registry.has_source(descriptor.source_id):
                    self.registry.register_source(descriptor)
                    self.adapters[descriptor.source_id] = self._build_adapter(descriptor)
            for entry in persisted.entries():
                if len(entry.path) > 1 and self.registry.has_source(entry.path[0]):
                    try:
                        self.registry.insert_entry(entry)
                    except ConflictError:
                        pass
        cache_path = registry_dir / NODE_CACHE_FILE
        if cache_path.exists():
            self.executor.load_cache(json.loads(cache_path.read_text(encoding="utf-8")))
