from __future__ import annotations

from orion.model.types import OutputSchema
from orion.schema import (
    Violation,
    validate_fragment,
    validate_text,
    validate_value,
    violation_report,
)

PERSON = OutputSchema(
    {
        "type": "object",
        "required": ["name", "age"],
        "properties": {
            "name": {"type": "string"},
            "age": {"type": "integer"},
            "tags": {"type": "array", "items": {"type": "string"}},
            "mood": {"type": "string", "enum": ["calm", "stormy"]},
            "address": {
                "type": "object",
                "required": ["city"],
                "properties": {"city": {"type": "string"}},
            },
        },
    }
)


def test_conformant_value_is_clean():
    value = {"name": "Ada", "age": 36, "tags": ["x"], "mood": "calm", "address": {"city": "Z"}}
    assert validate_value(value, PERSON) == []


def test_missing_required_key():
    violations = validate_value({"name": "Ada"}, PERSON)
    assert violations == [Violation("age", "missing", "required key absent")]


def test_type_mismatch_reports_path():
    violations = validate_value({"name": 7, "age": "x"}, PERSON)
    kinds = {(v.path, v.kind) for v in violations}
    assert ("name", "type") in kinds and ("age", "type") in kinds


def test_enum_violation():
    violations = validate_value({"name": "A", "age": 1, "mood": "wistful"}, PERSON)
    assert any(v.path == "mood" and v.kind == "enum" for v in violations)


def test_nested_paths():
    violations = validate_value({"name": "A", "age": 1, "address": {}}, PERSON)
    assert any(v.path == "address.city" and v.kind == "missing" for v in violations)
    violations = validate_value({"name": "A", "age": 1, "tags": ["ok", 3]}, PERSON)
    assert any(v.path == "tags[1]" and v.kind == "type" for v in violations)


def test_exhaustive_not_first_failure():
    violations = validate_value({}, PERSON)
    assert {v.path for v in violations} == {"name", "age"}


def test_integer_rejects_bool_and_float():
    schema = OutputSchema({"type": "object", "properties": {"n": {"type": "integer"}}})
    assert validate_value({"n": 3}, schema) == []
    assert validate_value({"n": True}, schema) != []
    assert validate_value({"n": 3.5}, schema) != []


def test_number_accepts_int_and_float():
    schema = OutputSchema({"type": "object", "properties": {"n": {"type": "number"}}})
    assert validate_value({"n": 3}, schema) == []
    assert validate_value({"n": 3.5}, schema) == []


def test_validate_text_parse_failure():
    value, violations = validate_text("{not json", PERSON)
    assert value is None
    assert violations[0].kind == "parse" and violations[0].path == "$"


def test_validate_text_round_trip():
    value, violations = validate_text('{"name": "A", "age": 2}', PERSON)
    assert violations == [] and value["age"] == 2


def test_fragment_validation_bare_types():
    assert validate_fragment("hi", {"type": "string"}) == []
    assert validate_fragment(5, {"type": "string"}) != []
    assert validate_fragment([1, 2], {"type": "array", "items": {"type": "integer"}}) == []


def test_violation_report_is_joined_paths():
    report = violation_report(validate_value({}, PERSON))
    assert "name" in report and "age" in report and "missing" in report
