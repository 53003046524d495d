"""Schema-constrained responses: request parsing, validation, bounded repair."""
from __future__ import annotations

from typing import Any, Callable, Optional

from orion.errors import OrionError
from orion.model.types import OutputSchema
from orion.schema import Violation, validate_text, violation_report

DEFAULT_MAX_REPAIRS = 2


class UnsupportedResponseFormat(OrionError):
    pass


class StructuredOutputFailure(OrionError):
    def __init__(self, violations: Optional[list[Violation]] = None, message: str = "") -> None:
        self.violations = violations or []
        detail = message or f"output never conformed: {violation_report(self.violations)}"
        super().__init__(detail)


def parse_response_format(value: Any) -> Optional[OutputSchema]:
    """None means chat mode; anything but a json_schema request is rejected."""
    if value is None:
        return None
    if not isinstance(value, dict) or value.get("type") != "json_schema":
        raise UnsupportedResponseFormat(
            f"response_format.type must be 'json_schema', got {value!r}"
        )
    schema = value.get("schema")
    if not isinstance(schema, dict) or schema.get("type") != "object":
        raise UnsupportedResponseFormat("response_format.schema must be an object schema")
    try:
        return OutputSchema(schema)
    except Exception as exc:
        raise UnsupportedResponseFormat(str(exc)) from exc


def validate_final(text: str, schema: OutputSchema) -> tuple[Any, list[Violation]]:
    return validate_text(text, schema)


def repair_loop(
    generate: Callable[[Optional[str]], str],
    schema: OutputSchema,
    max_repairs: int = DEFAULT_MAX_REPAIRS,
) -> Any:
    """Call ``generate`` until its text conforms; at most 1 + max_repairs calls.

    The feedback argument is None on the first call and a violation listing
    afterwards. Exhaustion raises with the last round's violations.
    """
    feedback: Optional[str] = None
    violations: list[Violation] = []
    for _ in range(1 + max_repairs):
        text = generate(feedback)
        value, violations = validate_text(text, schema)
        if not violations:
            return value
        feedback = violation_report(violations)
    raise StructuredOutputFailure(violations)
