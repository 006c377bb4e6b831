"""Plan construction, recursive refinement, validation and optimization.

A data plan is a DAG of operator invocations. Abstract and compound nodes are
refined into groups of alternative subplans; the optimizer estimates each
alternative with a documented cost model, selects one per group, then applies
semantics-preserving rewrites (predicate pushdown, common-subplan dedup,
parallel-branch annotation).

The cost-model constants live in ``assets/cost_model.json`` and are
non-normative: they exist to make selection deterministic and testable, not
to model any real deployment.
"""

from __future__ import annotations

import json
import uuid
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Mapping, Optional

from .context import ExecutionContext
from .data import DataBatch, value_digest
from .errors import (
    DepthExceededError,
    InfeasibleObjectiveError,
    NotFoundError,
    PlanningError,
)
from .expr import parse_expression, referenced_attributes, referenced_ports
from .opregistry import bind_attributes
from . import operators as ops

PLAN_STATUSES = ("planned", "refined", "ready", "running", "suspended", "done", "failed")

DEFAULT_MAX_DEPTH = 8


def load_cost_model(overrides: Optional[Mapping[str, Any]] = None) -> dict:
    model = json.loads(
        resources.files("dataplan.assets").joinpath("cost_model.json").read_text(encoding="utf-8")
    )
    if overrides:
        model.update(overrides)
    return model


@dataclass
class CostEstimate:
    out_rows: float = 0.0
    latency: float = 0.0
    money: float = 0.0
    quality: float = 0.0

    def to_obj(self) -> dict:
        return {
            "out_rows": self.out_rows,
            "latency": self.latency,
            "money": self.money,
            "quality": self.quality,
        }


@dataclass
class Objective:
    quality_floor: float = 0.0

    @classmethod
    def from_obj(cls, obj: Optional[Mapping[str, Any]]) -> "Objective":
        obj = obj or {}
        return cls(quality_floor=float(obj.get("quality_floor", 0.0)))

    def to_obj(self) -> dict:
        return {"quality_floor": self.quality_floor}


@dataclass
class PlanNode:
    node_id: str
    operator_id: str
    attributes: dict = field(default_factory=dict)
    properties: dict = field(default_factory=dict)
    status: str = "planned"

    def to_obj(self) -> dict:
        return {
            "operator_id": self.operator_id,
            "attributes": self.attributes,
            "properties": self.properties,
            "status": self.status,
        }


@dataclass
class Edge:
    from_node: str
    to_node: str
    to_port: int = 0

    def to_obj(self) -> dict:
        return {"from": self.from_node, "to": self.to_node, "port": self.to_port}


@dataclass
class PlanReport:
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_obj(self) -> dict:
        return {"ok": self.ok, "violations": self.violations}


class DataPlan:
    """DAG of operator invocations with alternative groups."""

    def __init__(self, plan_id: Optional[str] = None):
        self.plan_id = plan_id or uuid.uuid4().hex[:12]
        self.nodes: dict = {}
        self.edges: list = []
        self.alternatives: dict = {}
        self.root: Optional[str] = None
        self.annotations: dict = {}
        self._counter = 0

    def new_node_id(self) -> str:
        self._counter += 1
        return f"n{self._counter:03d}"

    def add_node(self, operator_id: str, attributes: dict, properties: dict, status: str) -> PlanNode:
        node = PlanNode(self.new_node_id(), operator_id, dict(attributes), dict(properties), status)
        self.nodes[node.node_id] = node
        return node

    def add_edge(self, from_node: str, to_node: str, to_port: int = 0) -> None:
        self.edges.append(Edge(from_node, to_node, to_port))

    def producers(self, node_id: str) -> dict:
        return {e.to_port: e.from_node for e in self.edges if e.to_node == node_id}

    def consumers(self, node_id: str) -> list:
        return [(e.to_node, e.to_port) for e in self.edges if e.from_node == node_id]

    def remove_node(self, node_id: str) -> None:
        self.nodes.pop(node_id, None)
        self.edges = [e for e in self.edges if e.from_node != node_id and e.to_node != node_id]

    def group_members(self, group_id: str) -> dict:
        return self.annotations.get("groups", {}).get(group_id, {}).get("members", {})

    def to_obj(self) -> dict:
        obj = {
            "plan_id": self.plan_id,
            "nodes": {nid: n.to_obj() for nid, n in sorted(self.nodes.items())},
            "edges": [e.to_obj() for e in self.edges],
            "alternatives": self.alternatives,
            "root": self.root,
        }
        if self.annotations:
            obj["annotations"] = self.annotations
        return obj

    @classmethod
    def from_obj(cls, obj: Mapping[str, Any]) -> "DataPlan":
        plan = cls(plan_id=obj.get("plan_id"))
        for nid, spec in obj.get("nodes", {}).items():
            plan.nodes[nid] = PlanNode(
                node_id=nid,
                operator_id=spec["operator_id"],
                attributes=dict(spec.get("attributes", {})),
                properties=dict(spec.get("properties", {})),
                status=spec.get("status", "planned"),
            )
        for e in obj.get("edges", []):
            plan.edges.append(Edge(e["from"], e["to"], int(e.get("port", 0))))
        plan.alternatives = {gid: list(roots) for gid, roots in obj.get("alternatives", {}).items()}
        plan.root = obj.get("root")
        plan.annotations = dict(obj.get("annotations", {}))
        numeric = [int(nid[1:]) for nid in plan.nodes if nid.startswith("n") and nid[1:].isdigit()]
        plan._counter = max(numeric, default=0)
        return plan

    def copy(self) -> "DataPlan":
        clone = DataPlan.from_obj(json.loads(json.dumps(self.to_obj())))
        clone._counter = self._counter
        return clone


class Planner:
    """Builds, refines, validates, estimates and optimizes data plans."""

    def __init__(self, ctx: ExecutionContext, cost_model: Optional[Mapping[str, Any]] = None):
        self.ctx = ctx
        self.cost_model = load_cost_model(cost_model)

    # -- construction ---------------------------------------------------------

    def instantiate(self, operator_id: str, attributes: Mapping[str, Any],
                    properties: Optional[Mapping[str, Any]] = None) -> DataPlan:
        descriptor = self.ctx.operators.get(operator_id)
        effective = descriptor.effective_attributes(attributes or {})
        problems = descriptor.validate_attributes(effective)
        if problems:
            raise PlanningError(f"cannot instantiate {operator_id!r}: " + "; ".join(problems))
        plan = DataPlan()
        status = "ready" if descriptor.kind == "physical" else "planned"
        node = plan.add_node(operator_id, effective, descriptor.effective_properties(properties or {}), status)
        plan.root = node.node_id
        return plan

    # -- refinement ---------------------------------------------------------

    def refine(self, plan: DataPlan, max_depth: int = DEFAULT_MAX_DEPTH) -> DataPlan:
        """Expand abstract/compound nodes into alternative subplans, recursively.

        All alternatives are retained; selection happens in :meth:`optimize`.
        """
        depth = {nid: 0 for nid in plan.nodes}
        queue = [
            nid
            for nid in plan.nodes
            if plan.nodes[nid].status == "planned"
            and self.ctx.operators.get(plan.nodes[nid].operator_id).kind != "physical"
        ]
        while queue:
            nid = queue.pop(0)
            node = plan.nodes.get(nid)
            if node is None or node.status != "planned":
                continue
            if depth[nid] >= max_depth:
                raise DepthExceededError(
                    f"refinement depth {max_depth} exceeded with abstract node {node.operator_id!r} remaining"
                )
            descriptor = self.ctx.operators.get(node.operator_id)
            if descriptor.kind == "physical":
                continue
            candidates = self._candidate_sources(node)
            alt_roots: list = []
            members: dict = {}
            group_meta: dict = {}
            for rule in descriptor.refinements:
                if not self._rule_applies(rule, node, candidates):
                    continue
                if rule.expander == "breakdown":
                    expansion = self._expand_breakdown(plan, node, candidates)
                    if expansion is None:
                        continue  # empty breakdown: fall back to the other alternatives
                    root, created, required = expansion
                    group_meta["required_sources"] = required
                else:
                    root, created = self._instantiate_template(plan, rule.template, node, candidates)
                alt_roots.append(root)
                members[root] = created
                for cid in created:
                    depth[cid] = depth[nid] + 1
                    cdesc = self.ctx.operators.get(plan.nodes[cid].operator_id)
                    if cdesc.kind != "physical":
                        queue.append(cid)
            if not alt_roots:
                # A member of an enclosing group that cannot expand (e.g. an
                # empty breakdown) is dropped, falling back to its siblings.
                if not self._drop_from_enclosing_group(plan, nid):
                    raise PlanningError(f"no applicable refinement rule for {node.operator_id!r}")
                continue
            node.status = "refined"
            plan.alternatives[nid] = alt_roots
            group_ann = plan.annotations.setdefault("groups", {}).setdefault(nid, {})
            group_ann["members"] = members
            group_ann.update(group_meta)
            self._bubble_up_membership(plan, nid, members, group_meta)
        return plan

    def _drop_from_enclosing_group(self, plan: DataPlan, nid: str) -> bool:
        for gid, roots in plan.alternatives.items():
            if nid not in roots:
                continue
            roots.remove(nid)
            plan.annotations.get("groups", {}).get(gid, {}).get("members", {}).pop(nid, None)
            plan.remove_node(nid)
            if not roots:
                raise PlanningError(f"every alternative of group {gid!r} failed to refine")
            return True
        return False

    def _bubble_up_membership(self, plan: DataPlan, nid: str, members: dict, group_meta: dict) -> None:
        # Enclosing groups track the full subtree of each alternative so that
        # coverage ranking sees the sources an expansion actually touches.
        all_created = [c for created in members.values() for c in created]
        for outer_gid, outer_ann in plan.annotations.get("groups", {}).items():
            if outer_gid == nid:
                continue
            for member_list in outer_ann.get("members", {}).values():
                if nid in member_list:
                    member_list.extend(c for c in all_created if c not in member_list)
                    if "required_sources" in group_meta:
                        outer_ann.setdefault("required_sources", group_meta["required_sources"])

    def _candidate_sources(self, node: PlanNode) -> list:
        restricted = node.attributes.get("source_ids")
        if restricted:
            return sorted(restricted)
        return sorted(d.source_id for d in self.ctx.registry.list_sources())

    def _rule_applies(self, rule, node: PlanNode, candidates: list) -> bool:
        for protocol in rule.requires_protocols:
            if not any(
                self.ctx.registry.has_source(sid)
                and self.ctx.registry.get_source(sid).protocol == protocol
                for sid in candidates
            ):
                return False
        for attr in rule.requires_attributes:
            if node.attributes.get(attr) is None:
                return False
        return True

    def _binding_context(self, node: PlanNode, candidates: list) -> dict:
        context: dict = {}
        descriptor = self.ctx.operators.get(node.operator_id)
        for name in descriptor.attribute_schema:
            context[name] = node.attributes.get(name)
        context.update(node.attributes)
        by_protocol: dict = {}
        for sid in candidates:
            if not self.ctx.registry.has_source(sid):
                continue
            proto = self.ctx.registry.get_source(sid).protocol
            by_protocol.setdefault(proto, sid)
        for proto, sid in by_protocol.items():
            context[f"sources.{proto}"] = sid
        context["sources.all"] = list(candidates)
        return context

    def _instantiate_template(self, plan: DataPlan, template, anchor: PlanNode, candidates: list) -> tuple:
        binding_context = self._binding_context(anchor, candidates)
        mapping: dict = {}
        created: list = []
        for tnode in template.nodes:
            bound = bind_attributes(tnode.attributes, binding_context)
            bound = {k: v for k, v in bound.items() if v is not None}
            descriptor = self.ctx.operators.get(tnode.operator_id)
            effective = descriptor.effective_attributes(bound)
            problems = descriptor.validate_attributes(effective)
            if problems:
                raise PlanningError(
                    f"template node {tnode.key!r} of {anchor.operator_id!r} invalid: " + "; ".join(problems)
                )
            status = "ready" if descriptor.kind == "physical" else "planned"
            node = plan.add_node(tnode.operator_id, effective, descriptor.effective_properties({}), status)
            mapping[tnode.key] = node.node_id
            created.append(node.node_id)
        for edge in template.edges:
            plan.add_edge(mapping[edge["from"]], mapping[edge["to"]], int(edge.get("port", 0)))
        anchor_producers = plan.producers(anchor.node_id)
        for route in template.inputs:
            producer = anchor_producers.get(int(route["port"]))
            if producer is not None:
                plan.add_edge(producer, mapping[route["to"]], int(route.get("to_port", 0)))
        return mapping[template.output], created

    # -- breakdown expansion ---------------------------------------------------

    def _expand_breakdown(self, plan: DataPlan, node: PlanNode, candidates: list) -> Optional[tuple]:
        """Run query_breakdown now and template the integration subplan.

        Each sub-question becomes the retrieval operator its target's protocol
        dictates; later rows fold into the base via the declared integrate/key.
        Returns None on an empty breakdown so the group falls back to its
        single-source alternatives.
        """
        attrs = {
            "question": node.attributes["question"],
            "source_ids": candidates,
        }
        properties = {"cache": True}
        batch = ops.invoke(self.ctx, "query_breakdown", DataBatch.empty(), attrs, properties)
        rows = batch.rows(0)
        if not rows:
            return None
        created: list = []

        def make(operator_id: str, node_attrs: dict) -> str:
            descriptor = self.ctx.operators.get(operator_id)
            effective = descriptor.effective_attributes(node_attrs)
            problems = descriptor.validate_attributes(effective)
            if problems:
                raise PlanningError(f"breakdown produced invalid {operator_id!r} node: " + "; ".join(problems))
            fresh = plan.add_node(operator_id, effective, descriptor.effective_properties({}), "ready")
            created.append(fresh.node_id)
            return fresh.node_id

        base: Optional[str] = None
        for i, row in enumerate(rows):
            target = row["target"]
            protocol = self.ctx.registry.get_source(target).protocol
            retrieval = self._retrieval_node(make, row, target, protocol, rows)
            if i == 0:
                base = retrieval
                continue
            integrate = row.get("integrate")
            key = row.get("key")
            if integrate == "in":
                if not key:
                    raise PlanningError("breakdown integrate 'in' requires a key")
                joiner = make("in_filter", {"key": key, "member_key": key})
            elif integrate == "join":
                if not key:
                    raise PlanningError("breakdown integrate 'join' requires a key")
                left_key, _, right_key = key.partition("=")
                joiner = make(
                    "join",
                    {"left_key": left_key.strip(), "right_key": (right_key or left_key).strip(), "kind": "inner"},
                )
            else:
                joiner = make("union", {"distinct": False})
            plan.add_edge(base, joiner, 0)
            plan.add_edge(retrieval, joiner, 1)
            base = joiner
        required = sorted({row["target"] for row in rows})
        return base, created, required

    def _retrieval_node(self, make, row: Mapping[str, Any], target: str, protocol: str,
                        all_rows: list) -> str:
        sub_q = row["sub_question"]
        key = row.get("key")
        key_schema = None
        if key:
            name = key.partition("=")[2] or key
            key_schema = {name: {"type": self._infer_key_type(all_rows, name), "required": True}}
        if protocol == "relational":
            return make("nl2sql", {"question": sub_q, "source_id": target})
        if protocol == "llm":
            attrs = {"question": sub_q, "source_id": target}
            if key_schema:
                attrs["output_schema"] = key_schema
            return make("nl2llm", attrs)
        if protocol == "user":
            attrs = {"question": sub_q}
            if key_schema:
                attrs["output_schema"] = key_schema
            return make("nl2u", attrs)
        if protocol == "vector":
            collection = self._first_collection(target)
            return make("nl2vec", {"question": sub_q, "source_id": target, "collection": collection, "k": 5})
        if protocol == "web":
            return make("web_extract", {"key": sub_q, "source_id": target})
        raise PlanningError(f"no retrieval operator for protocol {protocol!r}")

    def _first_collection(self, source_id: str) -> str:
        for entry in self.ctx.registry.subtree(source_id):
            if entry.level == "collection":
                return entry.path[-1]
        raise NotFoundError(f"source {source_id!r} has no collection metadata; sync the registry first")

    def _infer_key_type(self, rows: list, attribute: str) -> str:
        """Declared type of a join/membership key, inferred from the registry
        statistics of any relational target in the breakdown (sample min/max
        value types); 'any' when nothing is known."""
        for row in rows:
            target = row.get("target")
            if not target or not self.ctx.registry.has_source(target):
                continue
            if self.ctx.registry.get_source(target).protocol != "relational":
                continue
            for entry in self.ctx.registry.subtree(target):
                if entry.level != "attribute" or entry.path[-1] != attribute:
                    continue
                sample = entry.statistics.get("min")
                if isinstance(sample, bool):
                    return "boolean"
                if isinstance(sample, int):
                    return "integer"
                if isinstance(sample, float):
                    return "float"
                if isinstance(sample, str):
                    return "string"
        return "any"

    # -- validation --------------------------------------------------------------

    def validate(self, plan: DataPlan) -> PlanReport:
        """List structural violations; empty iff executable after selection."""
        report = PlanReport()
        if plan.root is None or plan.root not in plan.nodes:
            report.violations.append(f"root {plan.root!r} is not a plan node")
            return report
        for edge in plan.edges:
            if edge.from_node not in plan.nodes or edge.to_node not in plan.nodes:
                report.violations.append(f"edge {edge.to_obj()} references a missing node")
        cycle = self._find_cycle(plan)
        if cycle:
            report.violations.append("cycle: " + " -> ".join(cycle))
            return report
        for nid, node in sorted(plan.nodes.items()):
            try:
                descriptor = self.ctx.operators.get(node.operator_id)
            except NotFoundError:
                report.violations.append(f"node {nid}: unknown operator {node.operator_id!r}")
                continue
            problems = descriptor.validate_attributes(node.attributes)
            for problem in problems:
                report.violations.append(f"node {nid}: {problem}")
            if node.status == "refined":
                continue
            ports = [e.to_port for e in plan.edges if e.to_node == nid]
            lo, hi = descriptor.input_ports
            if len(set(ports)) != len(ports):
                report.violations.append(f"node {nid}: multiple edges into one port")
                continue
            n = len(ports)
            expected = max(lo, (max(ports) + 1) if ports else 0)
            missing = sorted(set(range(expected)) - set(ports))
            if n > hi:
                report.violations.append(
                    f"node {nid}: has {n} bound ports, operator {node.operator_id!r} accepts {lo}..{hi}"
                )
            elif missing:
                report.violations.append(f"node {nid}: dangling port(s) {missing}")
        for gid, roots in plan.alternatives.items():
            if gid not in plan.nodes:
                report.violations.append(f"alternative group {gid!r} has no anchor node")
            for root in roots:
                if root not in plan.nodes:
                    report.violations.append(f"alternative group {gid!r} member {root!r} is not a plan node")
        reachable = self._reachable_to_root(plan)
        for nid in sorted(plan.nodes):
            if nid not in reachable:
                report.violations.append(f"node {nid} does not reach the plan root")
        return report

    def _find_cycle(self, plan: DataPlan) -> Optional[list]:
        adjacency: dict = {nid: [] for nid in plan.nodes}
        for edge in plan.edges:
            if edge.from_node in adjacency and edge.to_node in adjacency:
                adjacency[edge.from_node].append(edge.to_node)
        state: dict = {}
        stack: list = []

        def visit(nid):
            state[nid] = 1
            stack.append(nid)
            for nxt in adjacency[nid]:
                if state.get(nxt) == 1:
                    return stack[stack.index(nxt):] + [nxt]
                if nxt not in state:
                    found = visit(nxt)
                    if found:
                        return found
            stack.pop()
            state[nid] = 2
            return None

        for nid in sorted(plan.nodes):
            if nid not in state:
                found = visit(nid)
                if found:
                    return found
        return None

    def _reachable_to_root(self, plan: DataPlan) -> set:
        # Reverse reachability from the root, treating alternative members as
        # feeding their anchor.
        upstream: dict = {nid: set() for nid in plan.nodes}
        for edge in plan.edges:
            if edge.to_node in upstream and edge.from_node in plan.nodes:
                upstream[edge.to_node].add(edge.from_node)
        for gid, roots in plan.alternatives.items():
            if gid in upstream:
                upstream[gid].update(r for r in roots if r in plan.nodes)
        seen = set()
        frontier = [plan.root]
        while frontier:
            nid = frontier.pop()
            if nid in seen:
                continue
            seen.add(nid)
            frontier.extend(upstream.get(nid, ()))
        return seen

    # -- cost estimation ------------------------------------------------------------

    def estimate(self, plan: DataPlan, objective: Optional[Objective] = None,
                 root: Optional[str] = None) -> CostEstimate:
        if not plan.nodes:
            return CostEstimate(0.0, 0.0, 0.0, 0.0)
        objective = objective or Objective()
        memo: dict = {}
        return self._estimate_node(plan, root or plan.root, memo, objective)

    def estimate_all(self, plan: DataPlan, objective: Optional[Objective] = None) -> dict:
        objective = objective or Objective()
        memo: dict = {}
        if plan.nodes and plan.root:
            self._estimate_node(plan, plan.root, memo, objective)
        for nid in plan.nodes:
            if nid not in memo:
                self._estimate_node(plan, nid, memo, objective)
        return memo

    def _estimate_node(self, plan: DataPlan, nid: str, memo: dict, objective: Objective) -> CostEstimate:
        if nid in memo:
            return memo[nid]
        node = plan.nodes[nid]
        if nid in plan.alternatives:
            ranked = self.rank_alternatives(plan, nid, objective, memo)
            memo[nid] = ranked[0][1]
            return memo[nid]
        producers = plan.producers(nid)
        inputs = [self._estimate_node(plan, producers[port], memo, objective) for port in sorted(producers)]
        estimate = self._node_rule(plan, node, inputs)
        estimate.latency += max((i.latency for i in inputs), default=0.0)
        estimate.money += sum(i.money for i in inputs)
        estimate.quality = min([estimate.quality] + [i.quality for i in inputs])
        memo[nid] = estimate
        return estimate

    def _node_rule(self, plan: DataPlan, node: PlanNode, inputs: list) -> CostEstimate:
        """Per-node constants and cardinalities; see assets/cost_model.json."""
        m = self.cost_model
        op = node.operator_id
        in_rows = inputs[0].out_rows if inputs else 0.0
        if op == "nl2sql":
            rows = float(self._relational_row_count(node))
            return CostEstimate(rows, m["relational_base_latency"] + m["relational_per_row_latency"] * rows, 0.0, 1.0)
        if op == "nl2llm":
            return CostEstimate(m["nl2llm_rows"], m["nl2llm_latency"], m["nl2llm_money"], m["nl2llm_quality"])
        if op == "nl2u":
            latency = m["nl2u_prompt_latency"]
            if self._has_fresh_profile(node):
                latency = m["nl2u_fresh_latency"]
            return CostEstimate(m["nl2u_rows"], latency, 0.0, m["nl2u_quality"])
        if op == "nl2vec":
            return CostEstimate(float(node.attributes.get("k", 5)), m["nl2vec_latency"], 0.0, m["nl2vec_quality"])
        if op == "web_extract":
            return CostEstimate(m["web_rows"], m["web_latency"], 0.0, m["web_quality"])
        if op == "query_breakdown":
            return CostEstimate(m["breakdown_rows"], m["breakdown_latency"], m["breakdown_money"], m["breakdown_quality"])
        if op == "filter":
            return CostEstimate(in_rows * m["filter_selectivity"], m["local_latency"], 0.0, 1.0)
        if op == "join":
            right = inputs[1].out_rows if len(inputs) > 1 else 0.0
            return CostEstimate(in_rows * right * m["join_selectivity"], m["local_latency"], 0.0, 1.0)
        if op == "in_filter":
            return CostEstimate(in_rows * m["in_filter_selectivity"], m["local_latency"], 0.0, 1.0)
        if op == "union":
            return CostEstimate(sum(i.out_rows for i in inputs), m["local_latency"], 0.0, 1.0)
        if op == "group_agg":
            return CostEstimate(in_rows * m["group_selectivity"], m["local_latency"], 0.0, 1.0)
        if op == "sort_limit":
            limit = node.attributes.get("limit")
            rows = min(in_rows, float(limit)) if limit is not None else in_rows
            return CostEstimate(rows, m["local_latency"], 0.0, 1.0)
        if op in ("project", "extract"):
            return CostEstimate(in_rows, m["local_latency"], 0.0, 1.0)
        # Unrefined abstract/compound nodes estimate as unknown-size scans.
        return CostEstimate(float(m["unknown_row_count"]), 0.0, 0.0, 1.0)

    def _relational_row_count(self, node: PlanNode) -> int:
        source_id = node.attributes.get("source_id")
        hint = node.attributes.get("collection_hint")
        try:
            entries = self.ctx.registry.subtree(source_id)
        except NotFoundError:
            return self.cost_model["unknown_row_count"]
        for entry in entries:
            if entry.level != "collection":
                continue
            if hint and entry.path[-1] != hint:
                continue
            count = entry.statistics.get("row_count")
            if count is not None:
                return count
        return self.cost_model["unknown_row_count"]

    def _has_fresh_profile(self, node: PlanNode) -> bool:
        if self.ctx.session is None:
            return False
        try:
            user = self.ctx.adapter(self.ctx.first_source("user"))
        except NotFoundError:
            return False
        return user.has_fresh_profile(self.ctx.session.profile_namespace, node.attributes.get("question", ""))

    # -- alternative ranking -------------------------------------------------------

    def rank_alternatives(self, plan: DataPlan, group_id: str, objective: Objective,
                          memo: Optional[dict] = None) -> list:
        """Rank a group's members: coverage-adjusted quality floor, then argmin
        latency, ties broken lexicographically by the subplan root's operator.

        Coverage is |sources a member touches ∩ sources the breakdown requires|
        / |required|; without breakdown metadata every member covers 1.
        """
        memo = {} if memo is None else memo
        group = plan.annotations.get("groups", {}).get(group_id, {})
        required = group.get("required_sources") or []
        ranked = []
        for root in plan.alternatives[group_id]:
            estimate = self._estimate_node(plan, root, memo, objective)
            coverage = 1.0
            if required:
                touched = self._touched_sources(plan, plan.group_members(group_id).get(root, [root]))
                coverage = len(touched & set(required)) / len(required)
            effective_quality = estimate.quality * coverage
            if effective_quality < objective.quality_floor:
                continue
            adjusted = CostEstimate(estimate.out_rows, estimate.latency, estimate.money, effective_quality)
            ranked.append((root, adjusted, plan.nodes[root].operator_id))
        if not ranked:
            raise InfeasibleObjectiveError(
                f"no alternative in group {group_id!r} satisfies quality floor {objective.quality_floor}"
            )
        ranked.sort(key=lambda item: (item[1].latency, item[2]))
        return [(root, estimate) for root, estimate, _ in ranked]

    def _touched_sources(self, plan: DataPlan, member_nodes: list) -> set:
        touched = set()
        user_sources = {d.source_id for d in self.ctx.registry.list_sources() if d.protocol == "user"}
        for nid in member_nodes:
            node = plan.nodes.get(nid)
            if node is None:
                continue
            source_id = node.attributes.get("source_id")
            if source_id:
                touched.add(source_id)
            if node.operator_id == "nl2u":
                touched.update(user_sources)
        return touched

    # -- optimization -----------------------------------------------------------

    def optimize(self, plan: DataPlan, objective: Optional[Objective] = None,
                 rewrites: bool = True) -> DataPlan:
        """Select one alternative per group, then rewrite the chosen plan.

        Rewrites are semantics-preserving: predicate pushdown below joins and
        unions, common-subplan dedup, and parallel-branch annotation; pass
        ``rewrites=False`` for a selection-only baseline. The result has no
        alternative groups and every node ready.
        """
        objective = objective or Objective()
        plan = plan.copy()
        while plan.alternatives:
            group_id = self._innermost_group(plan)
            self._resolve_group(plan, group_id, objective)
        if rewrites:
            self._push_down_filters(plan)
            self._dedup_common_subplans(plan)
            self._annotate_parallel_groups(plan)
        plan.annotations.pop("groups", None)
        for node in plan.nodes.values():
            descriptor = self.ctx.operators.get(node.operator_id)
            node.properties = descriptor.effective_properties(node.properties)
            if node.status in ("planned", "refined"):
                node.status = "ready"
        return plan

    def _innermost_group(self, plan: DataPlan) -> str:
        anchors = set(plan.alternatives)
        for gid in sorted(plan.alternatives):
            nested = False
            for root in plan.alternatives[gid]:
                member_nodes = set(plan.group_members(gid).get(root, []))
                if member_nodes & anchors:
                    nested = True
                    break
            if not nested:
                return gid
        return sorted(plan.alternatives)[0]

    def _resolve_group(self, plan: DataPlan, group_id: str, objective: Objective) -> None:
        ranked = self.rank_alternatives(plan, group_id, objective)
        chosen = ranked[0][0]
        members = plan.group_members(group_id)
        chosen_nodes = list(members.get(chosen, [chosen]))
        losers = [root for root, _ in ranked[1:]]
        all_roots = plan.alternatives[group_id]
        fallbacks = []
        for root in losers:
            fallbacks.append(self._serialize_fragment(plan, root, members.get(root, [root])))
        for edge in [e for e in plan.edges if e.from_node == group_id]:
            plan.add_edge(chosen, edge.to_node, edge.to_port)
        discarded = [root for root in all_roots if root != chosen]
        for root in discarded:
            for nid in members.get(root, [root]):
                plan.remove_node(nid)
        plan.remove_node(group_id)
        group_meta = plan.annotations.get("groups", {}).pop(group_id, {})
        del plan.alternatives[group_id]
        if plan.root == group_id:
            plan.root = chosen
        if fallbacks:
            plan.annotations.setdefault("fallbacks", {})[chosen] = {
                "chosen_nodes": chosen_nodes,
                "alternatives": fallbacks,
            }
        # The anchor may itself be a member of an enclosing group; the chosen
        # subplan now stands in for it, and breakdown requirements bubble up so
        # coverage applies where single-source alternatives compete.
        for outer_gid, roots in plan.alternatives.items():
            if group_id not in roots:
                continue
            roots[roots.index(group_id)] = chosen
            outer = plan.annotations.setdefault("groups", {}).setdefault(outer_gid, {})
            outer_members = outer.setdefault("members", {})
            inherited = outer_members.pop(group_id, [])
            merged = list(dict.fromkeys(inherited + chosen_nodes))
            outer_members[chosen] = [n for n in merged if n in plan.nodes]
            if "required_sources" in group_meta:
                outer.setdefault("required_sources", group_meta["required_sources"])

    def _serialize_fragment(self, plan: DataPlan, root: str, member_nodes: list) -> dict:
        nodes = {nid: plan.nodes[nid].to_obj() for nid in member_nodes if nid in plan.nodes}
        edges = [
            e.to_obj()
            for e in plan.edges
            if e.to_node in nodes and (e.from_node in nodes or e.from_node in plan.nodes)
        ]
        return {"root": root, "nodes": nodes, "edges": edges}

    # -- rewrites ---------------------------------------------------------------

    def _push_down_filters(self, plan: DataPlan) -> None:
        changed = True
        while changed:
            changed = False
            for nid in sorted(plan.nodes):
                node = plan.nodes.get(nid)
                if node is None or node.operator_id != "filter":
                    continue
                producers = plan.producers(nid)
                if set(producers) != {0}:
                    continue
                below = plan.nodes.get(producers[0])
                if below is None:
                    continue
                if len(plan.consumers(below.node_id)) != 1:
                    continue
                tree = parse_expression(node.attributes["predicate"])
                if referenced_ports(tree) - {0}:
                    continue
                names = referenced_attributes(tree, 0)
                if below.operator_id == "join" and self._push_below_join(plan, node, below, names):
                    changed = True
                    break
                if below.operator_id == "union" and self._push_below_union(plan, node, below):
                    changed = True
                    break

    def _push_below_join(self, plan: DataPlan, filt: PlanNode, join: PlanNode, names: set) -> bool:
        join_inputs = plan.producers(join.node_id)
        if set(join_inputs) != {0, 1}:
            return False
        left_attrs = self._infer_attributes(plan, join_inputs[0])
        right_attrs = self._infer_attributes(plan, join_inputs[1])
        if left_attrs is None or right_attrs is None:
            return False
        right_added = right_attrs | {"r_" + a for a in right_attrs}
        kind = join.attributes.get("kind", "inner")
        if not (names & right_added):
            side = 0
        elif kind == "inner" and names <= right_attrs and not (names & left_attrs):
            side = 1
        else:
            return False
        input_id = join_inputs[side]
        # Splice: input -> filter -> join(side); join takes over filter's consumers.
        plan.edges = [
            e
            for e in plan.edges
            if not (e.from_node == input_id and e.to_node == join.node_id and e.to_port == side)
            and not (e.from_node == join.node_id and e.to_node == filt.node_id)
        ]
        for edge in plan.edges:
            if edge.from_node == filt.node_id:
                edge.from_node = join.node_id
        plan.add_edge(input_id, filt.node_id, 0)
        plan.add_edge(filt.node_id, join.node_id, side)
        if plan.root == filt.node_id:
            plan.root = join.node_id
        return True

    def _push_below_union(self, plan: DataPlan, filt: PlanNode, union: PlanNode) -> bool:
        union_inputs = plan.producers(union.node_id)
        if not union_inputs:
            return False
        predicate = filt.attributes["predicate"]
        plan.edges = [e for e in plan.edges if not (e.from_node == union.node_id and e.to_node == filt.node_id)]
        for edge in plan.edges:
            if edge.from_node == filt.node_id:
                edge.from_node = union.node_id
        for port, producer in sorted(union_inputs.items()):
            copy = plan.add_node("filter", {"predicate": predicate}, dict(filt.properties), "ready")
            plan.edges = [
                e
                for e in plan.edges
                if not (e.from_node == producer and e.to_node == union.node_id and e.to_port == port)
            ]
            plan.add_edge(producer, copy.node_id, 0)
            plan.add_edge(copy.node_id, union.node_id, port)
        if plan.root == filt.node_id:
            plan.root = union.node_id
        plan.remove_node(filt.node_id)
        return True

    def _infer_attributes(self, plan: DataPlan, nid: str) -> Optional[set]:
        """Best-effort output attribute set of a node; None when unknowable."""
        node = plan.nodes[nid]
        op = node.operator_id
        producers = plan.producers(nid)

        def inp(port):
            producer = producers.get(port)
            return self._infer_attributes(plan, producer) if producer else None

        if op == "nl2sql":
            names = set()
            try:
                for entry in self.ctx.registry.subtree(node.attributes["source_id"]):
                    if entry.level == "attribute":
                        names.add(entry.path[-1])
            except NotFoundError:
                return None
            return names or None
        if op in ("nl2llm", "nl2u", "web_extract"):
            schema = node.attributes.get("output_schema")
            return set(schema) if schema else None
        if op == "nl2vec":
            return None
        if op == "project":
            rename = node.attributes.get("rename") or {}
            return {rename.get(c, c) for c in node.attributes["columns"]}
        if op in ("filter", "sort_limit", "in_filter"):
            return inp(0)
        if op == "extract":
            base = inp(0)
            return base | {node.attributes["as"]} if base is not None else None
        if op == "group_agg":
            return set(node.attributes["keys"]) | {a["as"] for a in node.attributes["aggs"]}
        if op == "union":
            out: set = set()
            for port in sorted(producers):
                attrs = inp(port)
                if attrs is None:
                    return None
                out |= attrs
            return out
        if op == "join":
            left, right = inp(0), inp(1)
            if left is None or right is None:
                return None
            merged = set(left)
            for name in right:
                merged.add("r_" + name if name in left else name)
            return merged
        return None

    def _dedup_common_subplans(self, plan: DataPlan) -> None:
        changed = True
        while changed:
            changed = False
            signatures: dict = {}
            for nid in sorted(plan.nodes):
                node = plan.nodes[nid]
                producers = plan.producers(nid)
                signature = value_digest(
                    [node.operator_id, node.attributes, [producers[p] for p in sorted(producers)]]
                )
                keeper = signatures.get(signature)
                if keeper is None:
                    signatures[signature] = nid
                    continue
                for edge in plan.edges:
                    if edge.from_node == nid:
                        edge.from_node = keeper
                if plan.root == nid:
                    plan.root = keeper
                plan.remove_node(nid)
                changed = True
                break

    def _annotate_parallel_groups(self, plan: DataPlan) -> None:
        groups = []
        for nid in sorted(plan.nodes):
            producers = plan.producers(nid)
            if len(producers) < 2:
                continue
            subtrees = []
            for port in sorted(producers):
                subtrees.append(self._ancestors(plan, producers[port]) | {producers[port]})
            if all(not (a & b) for i, a in enumerate(subtrees) for b in subtrees[i + 1:]):
                groups.append([sorted(s) for s in subtrees])
        if groups:
            plan.annotations["parallel_groups"] = groups
        else:
            plan.annotations.pop("parallel_groups", None)

    def _ancestors(self, plan: DataPlan, nid: str) -> set:
        seen: set = set()
        frontier = [nid]
        while frontier:
            current = frontier.pop()
            for port, producer in plan.producers(current).items():
                if producer not in seen:
                    seen.add(producer)
                    frontier.append(producer)
        return seen

    # -- explain ---------------------------------------------------------------

    def explain(self, plan: DataPlan, objective: Optional[Objective] = None) -> dict:
        estimates = self.estimate_all(plan, objective)
        rows = []
        for nid in sorted(plan.nodes):
            node = plan.nodes[nid]
            estimate = estimates.get(nid, CostEstimate())
            rows.append(
                {
                    "node_id": nid,
                    "operator_id": node.operator_id,
                    "status": node.status,
                    **estimate.to_obj(),
                }
            )
        total = estimates.get(plan.root, CostEstimate()) if plan.root else CostEstimate()
        return {"plan_id": plan.plan_id, "nodes": rows, "total": total.to_obj()}
