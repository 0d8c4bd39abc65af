"""Grammar schemas: per-language node specifications exported by parser toolchains.

A schema directory holds one ``<language>.json`` per language:

    {"language": "java",
     "node_specs": {"ForStatement": {"field_names": [...], "child_types": [...],
                                     "optional_flags": [...], "repeatable_flags": [...],
                                     "arity_min": 0, "arity_max": null}}}

``arity_max`` of null means unbounded.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import SchemaError


@dataclass(frozen=True)
class NodeSpec:
    field_names: tuple[str, ...] = ()
    child_types: tuple[str, ...] = ()
    optional_flags: tuple[bool, ...] = ()
    repeatable_flags: tuple[bool, ...] = ()
    arity_min: int = 0
    arity_max: int | None = None  # None = unbounded


DEFAULT_SPEC = NodeSpec()


@dataclass
class GrammarSchema:
    language: str
    node_specs: dict[str, NodeSpec] = field(default_factory=dict)

    def spec_for(self, type_name: str) -> NodeSpec:
        """Declared spec, or a synthesized default for undeclared types."""
        return self.node_specs.get(type_name, DEFAULT_SPEC)


def schema_from_dict(payload: dict) -> GrammarSchema:
    if "language" not in payload or "node_specs" not in payload:
        raise SchemaError("grammar schema needs 'language' and 'node_specs'")
    specs: dict[str, NodeSpec] = {}
    for type_name, raw in payload["node_specs"].items():
        arity_max = raw.get("arity_max")
        specs[type_name] = NodeSpec(
            field_names=tuple(raw.get("field_names", ())),
            child_types=tuple(raw.get("child_types", ())),
            optional_flags=tuple(bool(f) for f in raw.get("optional_flags", ())),
            repeatable_flags=tuple(bool(f) for f in raw.get("repeatable_flags", ())),
            arity_min=int(raw.get("arity_min", 0)),
            arity_max=None if arity_max is None else int(arity_max),
        )
    return GrammarSchema(language=payload["language"], node_specs=specs)


def load_schema(path: str | Path) -> GrammarSchema:
    return schema_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def load_schema_dir(schema_dir: str | Path) -> dict[str, GrammarSchema]:
    """All schemas in a directory, keyed by language."""
    schemas: dict[str, GrammarSchema] = {}
    for path in sorted(Path(schema_dir).glob("*.json")):
        schema = load_schema(path)
        schemas[schema.language] = schema
    return schemas
