"""Federated data-plan engine.

Heterogeneous sources (relational, vector, LLM, user, web) behind one
registry, a uniform operator algebra over multi-table batches, and a planner
that lowers natural-language questions into optimized, executable operator
DAGs with a human-in-the-loop source.
"""

from .data import DataBatch, Table, canonical_serialize, deserialize, digest, validate_schema
from .expr import eval_expression, format_expression, parse_expression

__version__ = "0.1.0"

__all__ = [
    "DataBatch",
    "Table",
    "canonical_serialize",
    "deserialize",
    "digest",
    "validate_schema",
    "parse_expression",
    "format_expression",
    "eval_expression",
    "__version__",
]
