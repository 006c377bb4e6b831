"""LLM source: treats a language model as a queryable database.

The query pipeline is rewrite -> cache lookup -> backend call -> schema
verification with bounded retries -> cache store. Two backends ship: an HTTP
chat-completions client and a deterministic stub driven by a mapping file,
which keeps every test and demo fully offline.
"""

from __future__ import annotations

import json
import re
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional

from ..data import DataBatch, Table, validate_schema, value_digest
from ..errors import ConnectivityError, VerificationError
from ..registry import MetadataEntry, SourceDescriptor

_STOP_WORDS = frozenset(
    """a an the is are was were be been being what which who whom whose when
    where why how do does did done can could should would will shall may might
    must me my mine i you your yours we us our ours they them their theirs it
    its he she his her of for in on at to from with by and or not no yes there
    that this these those please list show give tell find get make any all
    some considered suitable""".split()
)

_TOKEN_RE = re.compile(r"[A-Za-z0-9]+")

# Properties that change retry behavior but not the answer itself stay out of
# the cache key.
_CACHE_IRRELEVANT_PROPERTIES = ("max_retries", "cache")


def derive_schema_name(question: str) -> str:
    """Single-column name for schema-less questions: last non-stopword token."""
    tokens = [t.lower() for t in _TOKEN_RE.findall(question)]
    content = [t for t in tokens if t not in _STOP_WORDS]
    return content[-1] if content else "answer"


def load_prompt_template() -> str:
    return resources.files("dataplan.assets").joinpath("llm_prompt.txt").read_text(encoding="utf-8")


def render_schema(output_schema: Mapping[str, Any]) -> str:
    lines = []
    for name in output_schema:
        spec = output_schema[name]
        declared = spec if isinstance(spec, str) else spec.get("type", "any")
        lines.append(f"- {name}: {declared}")
    return "\n".join(lines)


class DeterministicStubBackend:
    """Mapping-file backend: first matching pattern wins, no match -> empty table."""

    def __init__(self, mapping: Iterable[Mapping[str, Any]] = ()):
        self.mapping = [dict(m) for m in mapping]
        self.calls = 0

    @classmethod
    def from_file(cls, path) -> "DeterministicStubBackend":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))

    @property
    def backend_id(self) -> str:
        return "stub"

    def complete(self, prompt: str, output_schema: Mapping[str, Any], properties: Mapping[str, Any]) -> Table:
        self.calls += 1
        for entry in self.mapping:
            if re.search(entry["pattern"], prompt, re.IGNORECASE | re.DOTALL):
                response = entry["response"]
                rows = response["rows"] if isinstance(response, Mapping) else response
                return Table(rows)
        return Table([])


class HttpChatBackend:
    """Chat-completions client; expects the model to answer with a JSON array."""

    def __init__(self, base_url: str, model: str, api_key: str = "", timeout: float = 30.0):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = api_key
        self.timeout = timeout
        self.calls = 0

    @property
    def backend_id(self) -> str:
        return f"http:{self.model}"

    def complete(self, prompt: str, output_schema: Mapping[str, Any], properties: Mapping[str, Any]) -> Table:
        import httpx

        self.calls += 1
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body = {
            "model": properties.get("model", self.model),
            "messages": [{"role": "user", "content": prompt}],
            "temperature": properties.get("temperature", 0.0),
        }
        try:
            response = httpx.post(
                f"{self.base_url}/chat/completions", json=body, headers=headers, timeout=self.timeout
            )
        except httpx.HTTPError as exc:
            raise ConnectivityError(f"LLM backend unreachable: {exc}") from exc
        if response.status_code != 200:
            raise ConnectivityError(f"LLM backend returned HTTP {response.status_code}")
        try:
            content = response.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, ValueError) as exc:
            raise ConnectivityError(f"malformed LLM backend response: {exc}") from exc
        return _table_from_content(content)


def _table_from_content(content: str) -> Table:
    text = content.strip()
    if text.startswith("```"):
        text = re.sub(r"^```[a-zA-Z]*\n?", "", text)
        text = re.sub(r"\n?```$", "", text)
    try:
        parsed = json.loads(text)
    except json.JSONDecodeError:
        # Leave verification to flag it; the retry loop will re-ask.
        return Table([{"_raw": content}])
    if isinstance(parsed, dict):
        parsed = [parsed]
    if not isinstance(parsed, list):
        return Table([{"_raw": content}])
    return Table([r for r in parsed if isinstance(r, dict)])


class LlmSource:
    protocol = "llm"

    def __init__(self, descriptor: SourceDescriptor, backend):
        self.descriptor = descriptor
        self.backend = backend
        self.template = load_prompt_template()
        self._cache: dict = {}
        self.cache_hits = 0

    def build_prompt(self, question: str, output_schema: Mapping[str, Any]) -> str:
        return self.template.format(question=question, schema=render_schema(output_schema))

    def cache_key(self, prompt: str, output_schema: Mapping[str, Any], properties: Mapping[str, Any]) -> str:
        relevant = {
            k: v for k, v in sorted(properties.items()) if k not in _CACHE_IRRELEVANT_PROPERTIES
        }
        return value_digest(
            {
                "prompt": prompt,
                "schema": {k: (v if isinstance(v, str) else dict(v)) for k, v in output_schema.items()},
                "backend": self.backend.backend_id,
                "properties": relevant,
            }
        )

    def query(
        self,
        question: str,
        output_schema: Optional[Mapping[str, Any]] = None,
        properties: Optional[Mapping[str, Any]] = None,
    ) -> DataBatch:
        """Ask the backend a question and return a schema-verified one-table batch."""
        props = dict(properties or {})
        normalized = " ".join(question.split())
        if not output_schema:
            output_schema = {derive_schema_name(normalized): "string"}
        prompt = self.build_prompt(normalized, output_schema)
        use_cache = props.get("cache", True)
        key = self.cache_key(prompt, output_schema, props)
        if use_cache and key in self._cache:
            self.cache_hits += 1
            return DataBatch([Table.from_obj(self._cache[key])])
        max_retries = int(props.get("max_retries", 2))
        attempt_prompt = prompt
        report = None
        for _ in range(max_retries + 1):
            table = self.backend.complete(attempt_prompt, output_schema, props)
            report = validate_schema(table, output_schema)
            if report.ok:
                if use_cache:
                    self._cache[key] = table.to_obj()
                return DataBatch([table])
            bullets = "\n".join(f"- {v.message}" for v in report.violations[:10])
            attempt_prompt = (
                f"{prompt}\n\nThe previous response violated the output schema:\n{bullets}\n"
                "Return corrected JSON."
            )
        raise VerificationError(
            f"LLM output failed schema verification after {max_retries + 1} attempts: {report.summary()}",
            detail=report.to_obj(),
        )

    def describe_metadata(self) -> list:
        source_id = self.descriptor.source_id
        return [
            MetadataEntry(
                path=[source_id, "knowledge"],
                level="database",
                description="commonsense and world knowledge via natural language",
            )
        ]
