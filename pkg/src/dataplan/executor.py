"""Topological plan execution over a session.

Runs optimized plans node by node, streaming status/data events, caching pure
node outputs, executing independent branches concurrently, and suspending on
user prompts. The observable result of a concurrent run is identical to any
serial topological order because node inputs are immutable batches.
"""

from __future__ import annotations

import threading
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from typing import Any, Mapping, Optional

from . import operators as ops
from .context import ExecutionContext
from .data import DataBatch, digest, value_digest
from .errors import EngineError, NotFoundError, PlanningError
from .planner import DataPlan, Edge, Planner, PlanNode
from .sessions import Session
from .sources.user import PromptPending

DEFAULT_MAX_WORKERS = 4


@dataclass
class NodeRecord:
    status: str = "pending"
    started_at: Optional[float] = None
    finished_at: Optional[float] = None
    output_digest: Optional[str] = None
    cache_hit: bool = False
    error: Optional[str] = None

    def to_obj(self) -> dict:
        return {
            "status": self.status,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "output_digest": self.output_digest,
            "cache_hit": self.cache_hit,
            "error": self.error,
        }


@dataclass
class ExecutionRecord:
    plan_id: str
    status: str = "running"
    nodes: dict = field(default_factory=dict)
    final: Optional[DataBatch] = None
    error: Optional[str] = None

    def to_obj(self) -> dict:
        return {
            "plan_id": self.plan_id,
            "status": self.status,
            "nodes": {nid: r.to_obj() for nid, r in sorted(self.nodes.items())},
            "final": self.final.to_obj() if self.final is not None else None,
            "error": self.error,
        }


@dataclass
class ExecutionState:
    plan: DataPlan
    session: Session
    record: ExecutionRecord
    options: dict
    outputs: dict = field(default_factory=dict)
    prompt_nodes: dict = field(default_factory=dict)
    lock: threading.Lock = field(default_factory=threading.Lock)


class Executor:
    """Executes plans; holds the per-engine node cache and active executions."""

    def __init__(self, ctx: ExecutionContext):
        self.ctx = ctx
        self.planner = Planner(ctx)
        self._node_cache: dict = {}
        self._active: dict = {}
        self._by_prompt: dict = {}
        self._lock = threading.Lock()

    # -- public API ------------------------------------------------------------

    def execute(self, plan: DataPlan, session: Session, options: Optional[Mapping[str, Any]] = None) -> ExecutionRecord:
        if plan.alternatives:
            raise PlanningError("plan still has alternative groups; optimize it before executing")
        report = self.planner.validate(plan)
        if not report.ok:
            raise PlanningError("plan failed validation", detail=report.to_obj())
        opts = {"node_cache": True, "fallback": False, "max_workers": DEFAULT_MAX_WORKERS}
        opts.update(options or {})
        record = ExecutionRecord(plan_id=plan.plan_id, nodes={nid: NodeRecord() for nid in plan.nodes})
        state = ExecutionState(plan=plan, session=session, record=record, options=opts)
        with self._lock:
            self._active[plan.plan_id] = state
        session.emit("status", {"plan_id": plan.plan_id, "status": "running"})
        self._run_loop(state)
        return record

    def record_for(self, plan_id: str) -> ExecutionRecord:
        state = self._state(plan_id)
        return state.record

    def plan_for(self, plan_id: str) -> DataPlan:
        return self._state(plan_id).plan

    def resume_with_answer(self, session: Session, prompt_id: str, answer: Any) -> ExecutionRecord:
        with self._lock:
            plan_id = self._by_prompt.get(prompt_id)
        if plan_id is None:
            raise NotFoundError(f"no suspended plan waits on prompt {prompt_id!r}")
        state = self._state(plan_id)
        node_id = state.prompt_nodes[prompt_id]
        user = self.ctx.adapter(self.ctx.first_source("user"))
        user.pending(prompt_id)  # unknown/expired prompts fail before any mutation
        session.emit("answer", {"prompt_id": prompt_id, "answer": answer}, node_id=node_id)
        try:
            user.provide_answer(session, prompt_id, answer)
        except PromptPending:
            # Re-prompt was emitted with the same prompt id; stay suspended.
            return state.record
        except EngineError as exc:
            self._forget_prompt(state, prompt_id)
            self._fail_node(state, node_id, exc)
            return state.record
        self._forget_prompt(state, prompt_id)
        state.record.nodes[node_id].status = "pending"
        state.plan.nodes[node_id].status = "ready"
        state.record.status = "running"
        session.emit("status", {"plan_id": state.plan.plan_id, "status": "running"})
        self._run_loop(state)
        return state.record

    def cache_size(self) -> int:
        return len(self._node_cache)

    def cache_to_obj(self) -> dict:
        return dict(self._node_cache)

    def load_cache(self, obj: Mapping[str, Any]) -> None:
        self._node_cache.update(obj)

    # -- core loop ----------------------------------------------------------------

    def _state(self, plan_id: str) -> ExecutionState:
        with self._lock:
            state = self._active.get(plan_id)
        if state is None:
            raise NotFoundError(f"no execution for plan {plan_id!r}")
        return state

    def _forget_prompt(self, state: ExecutionState, prompt_id: str) -> None:
        with self._lock:
            self._by_prompt.pop(prompt_id, None)
        state.prompt_nodes.pop(prompt_id, None)

    def _run_loop(self, state: ExecutionState) -> None:
        while True:
            if state.record.status == "failed":
                return
            runnable = self._runnable_nodes(state)
            if not runnable:
                break
            max_workers = max(1, int(state.options.get("max_workers", DEFAULT_MAX_WORKERS)))
            if len(runnable) == 1 or max_workers == 1:
                for nid in runnable:
                    self._run_node(state, nid)
            else:
                with ThreadPoolExecutor(max_workers=min(max_workers, len(runnable))) as pool:
                    futures = {pool.submit(self._run_node, state, nid): nid for nid in runnable}
                    for future in as_completed(futures):
                        future.result()
        self._finalize(state)

    def _runnable_nodes(self, state: ExecutionState) -> list:
        runnable = []
        for nid in sorted(state.plan.nodes):
            if state.record.nodes[nid].status != "pending":
                continue
            producers = state.plan.producers(nid)
            if all(state.record.nodes[p].status == "done" for p in producers.values()):
                runnable.append(nid)
        return runnable

    def _finalize(self, state: ExecutionState) -> None:
        record = state.record
        if record.status == "failed":
            return
        statuses = {r.status for r in record.nodes.values()}
        if "suspended" in statuses:
            record.status = "suspended"
            state.session.emit("status", {"plan_id": state.plan.plan_id, "status": "suspended"})
            return
        root = state.plan.root
        if root is not None and record.nodes.get(root) and record.nodes[root].status == "done":
            record.final = state.outputs.get(root)
            record.status = "done"
            state.session.emit(
                "status",
                {"plan_id": state.plan.plan_id, "status": "done", "final_digest": record.nodes[root].output_digest},
            )

    # -- node execution ----------------------------------------------------------

    def _assemble_input(self, state: ExecutionState, nid: str) -> DataBatch:
        producers = state.plan.producers(nid)
        tables = []
        for port in sorted(producers):
            tables.append(state.outputs[producers[port]].table(0))
        return DataBatch(tables)

    def _cache_key(self, state: ExecutionState, node: PlanNode, batch: DataBatch) -> Optional[str]:
        if not state.options.get("node_cache", True):
            return None
        if node.operator_id in ops.PURE_OPERATORS:
            pass
        elif node.operator_id in ops.CACHEABLE_SOURCE_OPERATORS:
            if node.properties.get("cache", True) is False:
                return None
        else:
            return None
        relevant_props = {k: v for k, v in node.properties.items() if k not in ("max_retries", "cache")}
        return value_digest(
            [
                node.operator_id,
                node.attributes,
                relevant_props,
                [digest(DataBatch([t])) for t in batch.tables],
            ]
        )

    def _run_node(self, state: ExecutionState, nid: str) -> None:
        node = state.plan.nodes[nid]
        record = state.record.nodes[nid]
        record.status = "running"
        record.started_at = time.time()
        node.status = "running"
        state.session.emit("status", {"node_id": nid, "status": "running"}, node_id=nid)
        try:
            batch = self._assemble_input(state, nid)
            key = self._cache_key(state, node, batch)
            if key is not None and key in self._node_cache:
                output = DataBatch.from_obj(self._node_cache[key])
                record.cache_hit = True
            else:
                node_ctx = replace(self.ctx, session=state.session, node_id=nid)
                output = ops.invoke(node_ctx, node.operator_id, batch, node.attributes, node.properties)
                if key is not None:
                    self._node_cache[key] = output.to_obj()
            with state.lock:
                state.outputs[nid] = output
            record.status = "done"
            record.finished_at = time.time()
            record.output_digest = digest(output)
            node.status = "done"
            state.session.emit("status", {"node_id": nid, "status": "done"}, node_id=nid)
            state.session.emit(
                "data",
                {
                    "node_id": nid,
                    "digest": record.output_digest,
                    "row_count": sum(len(t) for t in output.tables),
                    "cache_hit": record.cache_hit,
                },
                node_id=nid,
            )
        except PromptPending as pending:
            record.status = "suspended"
            node.status = "suspended"
            state.session.emit("status", {"node_id": nid, "status": "suspended"}, node_id=nid)
            prompt_id = pending.prompt.prompt_id
            state.prompt_nodes[prompt_id] = nid
            with self._lock:
                self._by_prompt[prompt_id] = state.plan.plan_id
        except EngineError as exc:
            self._fail_node(state, nid, exc)

    def _fail_node(self, state: ExecutionState, nid: str, exc: EngineError) -> None:
        record = state.record.nodes[nid]
        record.status = "failed"
        record.finished_at = time.time()
        record.error = exc.message
        state.plan.nodes[nid].status = "failed"
        state.session.emit("status", {"node_id": nid, "status": "failed"}, node_id=nid)
        state.session.emit("error", {"node_id": nid, "error": exc.to_payload()}, node_id=nid)
        if state.options.get("fallback") and self._try_fallback(state, nid):
            return
        state.record.status = "failed"
        state.record.error = exc.message
        state.session.emit("status", {"plan_id": state.plan.plan_id, "status": "failed"})

    # -- recorded-alternative fallback ------------------------------------------------

    def _try_fallback(self, state: ExecutionState, failed_nid: str) -> bool:
        """Substitute the next-best recorded alternative for the failed subplan."""
        plan = state.plan
        fallbacks = plan.annotations.get("fallbacks", {})
        for chosen_root, info in list(fallbacks.items()):
            chosen_nodes = set(info.get("chosen_nodes", [chosen_root]))
            if failed_nid not in chosen_nodes or not info.get("alternatives"):
                continue
            fragment = info["alternatives"].pop(0)
            consumers = plan.consumers(chosen_root)
            for nid in chosen_nodes:
                plan.remove_node(nid)
                state.record.nodes.pop(nid, None)
                state.outputs.pop(nid, None)
            for spec_id, spec in fragment["nodes"].items():
                plan.nodes[spec_id] = PlanNode(
                    node_id=spec_id,
                    operator_id=spec["operator_id"],
                    attributes=dict(spec.get("attributes", {})),
                    properties=dict(spec.get("properties", {})),
                    status="ready",
                )
                state.record.nodes[spec_id] = NodeRecord()
            for edge in fragment["edges"]:
                plan.edges.append(Edge(edge["from"], edge["to"], int(edge.get("port", 0))))
            new_root = fragment["root"]
            for to_node, port in consumers:
                plan.add_edge(new_root, to_node, port)
            if plan.root == chosen_root:
                plan.root = new_root
            fallbacks[new_root] = {"chosen_nodes": list(fragment["nodes"]), "alternatives": info["alternatives"]}
            del fallbacks[chosen_root]
            state.session.emit(
                "control",
                {"fallback_from": chosen_root, "fallback_to": new_root, "reason": "node failure"},
            )
            return True
        return False
