"""Exception hierarchy shared by all engine modules.

Every error carries a stable ``code`` so the service layer can map it to
exactly one API error code (and HTTP status) without inspecting types.
"""

from __future__ import annotations

from typing import Any

# API error codes and the HTTP status each maps to.
ERROR_STATUS = {
    "bad_request": 400,
    "not_found": 404,
    "conflict": 409,
    "infeasible": 422,
    "backend_unreachable": 502,
    "verification_failed": 422,
    "internal": 500,
}


class EngineError(Exception):
    """Base class for all engine errors."""

    code = "internal"

    def __init__(self, message: str, detail: Any = None):
        super().__init__(message)
        self.message = message
        self.detail = detail

    def to_payload(self) -> dict:
        payload = {"code": self.code, "message": self.message}
        if self.detail is not None:
            payload["detail"] = self.detail
        return payload


class BadRequestError(EngineError):
    code = "bad_request"


class DataError(BadRequestError):
    """Invalid value, row, table or batch construction."""


class SerializationError(DataError):
    """Batch cannot be canonically serialized (e.g. non-finite float)."""


class ExpressionSyntaxError(BadRequestError):
    """Predicate text rejected by the parser.

    ``offset`` is the 0-based byte offset of the first invalid token.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(message, detail={"offset": offset})
        self.offset = offset


class PolicyError(BadRequestError):
    """Statement rejected by policy (e.g. write statement on a read-only surface)."""


class NotFoundError(EngineError):
    code = "not_found"


class ConflictError(EngineError):
    code = "conflict"


class ConnectivityError(EngineError):
    code = "backend_unreachable"


class VerificationError(EngineError):
    """Output failed schema or reference verification after retries."""

    code = "verification_failed"


class InfeasibleObjectiveError(EngineError):
    """No plan alternative satisfies the optimization objective."""

    code = "infeasible"


class PlanningError(BadRequestError):
    """Plan construction, refinement or validation failure."""


class DepthExceededError(PlanningError):
    """refine() hit the recursion depth limit with abstract leaves remaining."""


class AbstractOperatorError(BadRequestError):
    """Attempt to execute an operator that only expresses intent."""


class CancellationError(ConflictError):
    """Session closed while a plan was suspended on a prompt."""
