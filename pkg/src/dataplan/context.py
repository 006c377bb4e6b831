"""Execution context handed to operator implementations.

Bundles the registries, the source adapters and (when executing) the session
and current plan node, so operator functions keep the uniform signature
``output = op(input, attributes, properties)`` plus this context.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Mapping, Optional

from .errors import BadRequestError, NotFoundError
from .opregistry import OperatorRegistry
from .registry import DataRegistry
from .sessions import Session


@dataclass
class ExecutionContext:
    registry: DataRegistry
    operators: OperatorRegistry
    adapters: Mapping[str, Any] = field(default_factory=dict)
    session: Optional[Session] = None
    node_id: Optional[str] = None

    def adapter(self, source_id: str, protocol: Optional[str] = None):
        adapter = self.adapters.get(source_id)
        if adapter is None:
            raise NotFoundError(f"no adapter for source {source_id!r}")
        if protocol is not None:
            descriptor = self.registry.get_source(source_id)
            if descriptor.protocol != protocol:
                raise BadRequestError(
                    f"source {source_id!r} has protocol {descriptor.protocol!r}, expected {protocol!r}"
                )
        return adapter

    def first_source(self, protocol: str) -> str:
        """Lowest source id registered with the given protocol."""
        for descriptor in self.registry.list_sources():
            if descriptor.protocol == protocol and descriptor.source_id in self.adapters:
                return descriptor.source_id
        raise NotFoundError(f"no {protocol} source registered")

    def has_protocol(self, protocol: str) -> bool:
        try:
            self.first_source(protocol)
            return True
        except NotFoundError:
            return False

    def require_session(self) -> Session:
        if self.session is None:
            raise BadRequestError("this operator requires an executing session")
        return self.session

    def for_node(self, node_id: str) -> "ExecutionContext":
        return replace(self, node_id=node_id)
