"""Validation against the supported JSON-schema subset.

Supported: object/array/string/number/integer/boolean types, required keys,
enum, and arbitrary nesting. Violations are reported exhaustively, each with a
path, one of the kinds {missing, type, enum, parse}, and a human detail line.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Mapping

from orion.model.types import OutputSchema

_TYPE_CHECKS = {
    "object": lambda v: isinstance(v, Mapping),
    "array": lambda v: isinstance(v, (list, tuple)),
    "string": lambda v: isinstance(v, str),
    "number": lambda v: isinstance(v, (int, float)) and not isinstance(v, bool),
    "integer": lambda v: isinstance(v, int) and not isinstance(v, bool),
    "boolean": lambda v: isinstance(v, bool),
}


@dataclass(frozen=True)
class Violation:
    path: str
    kind: str  # missing | type | enum | parse
    detail: str

    def to_json(self) -> dict:
        return {"path": self.path, "kind": self.kind, "detail": self.detail}


def _join(path: str, key: str) -> str:
    return f"{path}.{key}" if path else key


def _check(value: Any, schema: Mapping[str, Any], path: str, out: list[Violation]) -> None:
    expected = schema.get("type")
    if expected in _TYPE_CHECKS and not _TYPE_CHECKS[expected](value):
        out.append(
            Violation(path or "$", "type", f"expected {expected}, got {type(value).__name__}")
        )
        return
    if "enum" in schema and value not in schema["enum"]:
        out.append(Violation(path or "$", "enum", f"{value!r} not in {schema['enum']!r}"))
        return
    if expected == "object":
        props = schema.get("properties", {})
        for key in schema.get("required", []):
            if key not in value:
                out.append(Violation(_join(path, key), "missing", "required key absent"))
        for key, sub in props.items():
            if isinstance(sub, Mapping) and key in value:
                _check(value[key], sub, _join(path, key), out)
    elif expected == "array":
        items = schema.get("items")
        if isinstance(items, Mapping):
            for i, item in enumerate(value):
                _check(item, items, f"{path}[{i}]" if path else f"[{i}]", out)


def validate_value(value: Any, schema: OutputSchema) -> list[Violation]:
    """Return all violations of ``value`` against ``schema`` (empty list = conformant)."""
    out: list[Violation] = []
    _check(value, schema.root, "", out)
    return out


def validate_fragment(value: Any, fragment: Mapping[str, Any]) -> list[Violation]:
    """Like validate_value but against a bare schema fragment of any type."""
    out: list[Violation] = []
    _check(value, fragment, "", out)
    return out


def validate_text(text: str, schema: OutputSchema) -> tuple[Any, list[Violation]]:
    """Parse ``text`` as JSON then validate; a parse failure is a single `parse` violation."""
    try:
        value = json.loads(text)
    except (json.JSONDecodeError, TypeError) as exc:
        return None, [Violation("$", "parse", f"not valid JSON: {exc}")]
    return value, validate_value(value, schema)


def violation_report(violations: list[Violation]) -> str:
    return "; ".join(f"{v.path}: {v.kind} ({v.detail})" for v in violations)
