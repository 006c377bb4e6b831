"""Operator registry: descriptors, attribute schemas and refinement rules.

Abstract operators express intent; physical operators bind to executable
implementations at registration time; compound operators carry both an
implementation (invoked at plan time) and refinement rules.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Optional

from .data import conforms, type_name, validate_value
from .errors import BadRequestError, ConflictError, DataError, NotFoundError

KINDS = ("abstract", "compound", "physical")

_BINDING_REF = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_.]*)\}")


@dataclass
class AttributeSpec:
    """Declared shape of one operator attribute or property."""

    name: str
    type: str = "any"
    description: str = ""
    required: bool = False
    constraints: Optional[dict] = None  # {"enum": [...]} or {"min": n, "max": n}
    default: Any = None

    def __post_init__(self):
        if self.default is not None:
            validate_value(self.default)
            problems = self.check(self.default)
            if problems:
                raise DataError(f"default for {self.name!r} violates its own spec: {problems[0]}")

    def check(self, value: Any) -> list:
        """Violation messages for a concrete value (empty list when valid)."""
        problems = []
        if not conforms(value, self.type):
            problems.append(f"attribute {self.name!r} expected {self.type}, got {type_name(value)}")
        if self.constraints and value is not None:
            enum = self.constraints.get("enum")
            if enum is not None and value not in enum:
                problems.append(f"attribute {self.name!r} must be one of {enum}, got {value!r}")
            lo = self.constraints.get("min")
            hi = self.constraints.get("max")
            if isinstance(value, (int, float)) and not isinstance(value, bool):
                if lo is not None and value < lo:
                    problems.append(f"attribute {self.name!r} must be >= {lo}")
                if hi is not None and value > hi:
                    problems.append(f"attribute {self.name!r} must be <= {hi}")
        return problems

    def to_obj(self) -> dict:
        return {
            "name": self.name,
            "type": self.type,
            "description": self.description,
            "required": self.required,
            "constraints": self.constraints,
            "default": self.default,
        }

    @classmethod
    def from_obj(cls, obj: Mapping[str, Any]) -> "AttributeSpec":
        return cls(
            name=obj["name"],
            type=obj.get("type", "any"),
            description=obj.get("description", ""),
            required=bool(obj.get("required", False)),
            constraints=obj.get("constraints"),
            default=obj.get("default"),
        )


@dataclass
class TemplateNode:
    key: str
    operator_id: str
    attributes: dict = field(default_factory=dict)

    def to_obj(self) -> dict:
        return {"key": self.key, "operator_id": self.operator_id, "attributes": self.attributes}

    @classmethod
    def from_obj(cls, obj: Mapping[str, Any]) -> "TemplateNode":
        return cls(key=obj["key"], operator_id=obj["operator_id"], attributes=dict(obj.get("attributes", {})))


@dataclass
class PlanTemplate:
    """Subplan skeleton a refinement rule instantiates.

    Edges use template-node keys; ``output`` names the node whose result
    stands in for the refined parent; ``inputs`` route the parent's input
    ports into template nodes.
    """

    nodes: list
    edges: list = field(default_factory=list)  # {"from": key, "to": key, "port": int}
    inputs: list = field(default_factory=list)  # {"port": int, "to": key, "to_port": int}
    output: str = ""

    def __post_init__(self):
        keys = [n.key for n in self.nodes]
        if len(set(keys)) != len(keys):
            raise DataError("template node keys must be unique")
        if not self.output and self.nodes:
            self.output = self.nodes[-1].key
        if self.output not in keys:
            raise DataError(f"template output {self.output!r} is not a node key")
        for edge in self.edges:
            if edge["from"] not in keys or edge["to"] not in keys:
                raise DataError(f"template edge references unknown key: {edge}")
        for route in self.inputs:
            if route["to"] not in keys:
                raise DataError(f"template input routes to unknown key: {route}")
        self._check_acyclic()

    def _check_acyclic(self) -> None:
        adjacency: dict = {n.key: [] for n in self.nodes}
        for edge in self.edges:
            adjacency[edge["from"]].append(edge["to"])
        state: dict = {}

        def visit(key):
            if state.get(key) == 1:
                raise DataError(f"template contains a cycle through {key!r}")
            if state.get(key) == 2:
                return
            state[key] = 1
            for nxt in adjacency[key]:
                visit(nxt)
            state[key] = 2

        for key in adjacency:
            visit(key)

    def to_obj(self) -> dict:
        return {
            "nodes": [n.to_obj() for n in self.nodes],
            "edges": self.edges,
            "inputs": self.inputs,
            "output": self.output,
        }

    @classmethod
    def from_obj(cls, obj: Mapping[str, Any]) -> "PlanTemplate":
        return cls(
            nodes=[TemplateNode.from_obj(n) for n in obj.get("nodes", [])],
            edges=[dict(e) for e in obj.get("edges", [])],
            inputs=[dict(r) for r in obj.get("inputs", [])],
            output=obj.get("output", ""),
        )


def bind_attributes(bindings: Mapping[str, Any], context: Mapping[str, Any]) -> dict:
    """Resolve ``${name}`` references in template attribute bindings.

    A string that is exactly one reference passes the raw value through
    (preserving lists and maps); otherwise references interpolate as text.
    Unresolvable references raise.
    """
    resolved = {}
    for name, binding in bindings.items():
        resolved[name] = _bind_value(binding, context)
    return resolved


def _bind_value(binding: Any, context: Mapping[str, Any]) -> Any:
    if isinstance(binding, str):
        whole = _BINDING_REF.fullmatch(binding)
        if whole:
            return _lookup(whole.group(1), context)

        def repl(m):
            value = _lookup(m.group(1), context)
            return value if isinstance(value, str) else str(value)

        return _BINDING_REF.sub(repl, binding)
    if isinstance(binding, list):
        return [_bind_value(item, context) for item in binding]
    if isinstance(binding, dict):
        return {k: _bind_value(v, context) for k, v in binding.items()}
    return binding


def _lookup(ref: str, context: Mapping[str, Any]) -> Any:
    if ref in context:
        return context[ref]
    raise BadRequestError(f"template binding references unknown name {ref!r}")


@dataclass
class RefinementRule:
    """One alternative expansion of an abstract or compound operator.

    ``template`` rules instantiate a static subplan with attribute bindings.
    ``expander`` names a planner-built expansion evaluated at plan time
    (currently only ``breakdown``); such rules may still carry a nominal
    template describing the shape they produce, for inspection. A rule only
    applies when every protocol in ``requires_protocols`` has a registered
    source among the node's candidates and the node carries every attribute
    in ``requires_attributes``.
    """

    rule_id: str
    template: Optional[PlanTemplate] = None
    expander: Optional[str] = None
    requires_protocols: list = field(default_factory=list)
    requires_attributes: list = field(default_factory=list)

    def __post_init__(self):
        if self.template is None and self.expander is None:
            raise DataError(f"rule {self.rule_id!r} must have a template or an expander")

    def to_obj(self) -> dict:
        return {
            "rule_id": self.rule_id,
            "template": self.template.to_obj() if self.template else None,
            "expander": self.expander,
            "requires_protocols": self.requires_protocols,
            "requires_attributes": self.requires_attributes,
        }

    @classmethod
    def from_obj(cls, obj: Mapping[str, Any]) -> "RefinementRule":
        template = obj.get("template")
        return cls(
            rule_id=obj["rule_id"],
            template=PlanTemplate.from_obj(template) if template else None,
            expander=obj.get("expander"),
            requires_protocols=list(obj.get("requires_protocols", [])),
            requires_attributes=list(obj.get("requires_attributes", [])),
        )


@dataclass
class OperatorDescriptor:
    operator_id: str
    kind: str
    description: str = ""
    attribute_schema: dict = field(default_factory=dict)
    property_schema: dict = field(default_factory=dict)
    input_ports: tuple = (0, 0)  # inclusive (min, max)
    refinements: list = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DataError(f"unknown operator kind {self.kind!r}")
        if self.kind == "physical" and self.refinements:
            raise DataError(f"physical operator {self.operator_id!r} must not declare refinements")
        if self.kind in ("abstract", "compound") and not self.refinements:
            raise DataError(f"{self.kind} operator {self.operator_id!r} must declare refinements")
        lo, hi = self.input_ports
        if lo < 0 or hi < lo:
            raise DataError(f"invalid input port range {self.input_ports!r}")

    def validate_attributes(self, attributes: Mapping[str, Any]) -> list:
        """Violation messages for an attribute map against this schema."""
        problems = []
        for name in attributes:
            if name not in self.attribute_schema:
                problems.append(f"unknown attribute {name!r} for operator {self.operator_id!r}")
        for name, spec in self.attribute_schema.items():
            if name in attributes:
                problems.extend(spec.check(attributes[name]))
            elif spec.required and spec.default is None:
                problems.append(f"required attribute {name!r} missing for operator {self.operator_id!r}")
        return problems

    def effective_attributes(self, attributes: Mapping[str, Any]) -> dict:
        out = dict(attributes)
        for name, spec in self.attribute_schema.items():
            if name not in out and spec.default is not None:
                out[name] = spec.default
        return out

    def effective_properties(self, properties: Mapping[str, Any]) -> dict:
        out = dict(properties)
        for name, spec in self.property_schema.items():
            if name not in out and spec.default is not None:
                out[name] = spec.default
        return out

    def to_obj(self) -> dict:
        return {
            "operator_id": self.operator_id,
            "kind": self.kind,
            "description": self.description,
            "attribute_schema": {n: s.to_obj() for n, s in self.attribute_schema.items()},
            "property_schema": {n: s.to_obj() for n, s in self.property_schema.items()},
            "input_ports": list(self.input_ports),
            "refinements": [r.to_obj() for r in self.refinements],
        }

    @classmethod
    def from_obj(cls, obj: Mapping[str, Any]) -> "OperatorDescriptor":
        return cls(
            operator_id=obj["operator_id"],
            kind=obj["kind"],
            description=obj.get("description", ""),
            attribute_schema={n: AttributeSpec.from_obj(s) for n, s in obj.get("attribute_schema", {}).items()},
            property_schema={n: AttributeSpec.from_obj(s) for n, s in obj.get("property_schema", {}).items()},
            input_ports=tuple(obj.get("input_ports", (0, 0))),
            refinements=[RefinementRule.from_obj(r) for r in obj.get("refinements", [])],
        )


class OperatorRegistry:
    """Catalog of operator descriptors with bound implementations."""

    def __init__(self):
        self._descriptors: dict = {}
        self._implementations: dict = {}

    def register(self, descriptor: OperatorDescriptor, implementation: Optional[Callable] = None) -> str:
        if descriptor.operator_id in self._descriptors:
            raise ConflictError(f"operator {descriptor.operator_id!r} is already registered")
        if descriptor.kind == "physical" and implementation is None:
            raise BadRequestError(f"physical operator {descriptor.operator_id!r} has no bound implementation")
        if descriptor.kind == "abstract" and implementation is not None:
            raise BadRequestError(f"abstract operator {descriptor.operator_id!r} cannot bind an implementation")
        self._descriptors[descriptor.operator_id] = descriptor
        if implementation is not None:
            self._implementations[descriptor.operator_id] = implementation
        return descriptor.operator_id

    def get(self, operator_id: str) -> OperatorDescriptor:
        descriptor = self._descriptors.get(operator_id)
        if descriptor is None:
            raise NotFoundError(f"operator {operator_id!r} is not registered")
        return descriptor

    def has(self, operator_id: str) -> bool:
        return operator_id in self._descriptors

    def implementation(self, operator_id: str) -> Callable:
        self.get(operator_id)
        impl = self._implementations.get(operator_id)
        if impl is None:
            raise BadRequestError(f"operator {operator_id!r} has no executable implementation")
        return impl

    def list_operators(self) -> list:
        return [self._descriptors[oid] for oid in sorted(self._descriptors)]

    def list_refinements(self, operator_id: str) -> list:
        return list(self.get(operator_id).refinements)

    def validate_templates(self) -> list:
        """Resolve deferred checks: every template node's operator must exist."""
        problems = []
        for descriptor in self._descriptors.values():
            for rule in descriptor.refinements:
                if rule.template is None:
                    continue
                for node in rule.template.nodes:
                    if node.operator_id not in self._descriptors:
                        problems.append(
                            f"rule {rule.rule_id!r} of {descriptor.operator_id!r} references "
                            f"unknown operator {node.operator_id!r}"
                        )
        return problems

    def to_obj(self) -> dict:
        return {"operators": {oid: d.to_obj() for oid, d in sorted(self._descriptors.items())}}
