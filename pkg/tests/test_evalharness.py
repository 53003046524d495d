from __future__ import annotations

import json
from pathlib import Path

import pytest

from orion.errors import OrionError
from orion.evalharness import (
    Assignment,
    BenchmarkItem,
    CompositeWeights,
    OutOfRange,
    ScoreRecord,
    ScoreSheet,
    TooFewEvaluators,
    TooManyModels,
    UnknownLabel,
    aggregate,
    assign_blind,
    assignments_from_json,
    assignments_to_json,
    composite,
    flag_disagreement,
    read_scores_csv,
    run_benchmark,
    toy_benchmark,
)

EVALUATORS = ("e1", "e2", "e3")


# -- composite score ---------------------------------------------------------


def test_composite_reference_values():
    assert composite(ScoreSheet(10, 10, 10, 10)) == pytest.approx(10.0, abs=1e-9)
    assert composite(ScoreSheet(8, 6, 9, 7)) == pytest.approx(7.35, abs=1e-9)
    assert composite(ScoreSheet(8, 6, None, 7)) == pytest.approx(6.9375, abs=1e-9)


def test_composite_not_applicable_stays_on_scale():
    assert composite(ScoreSheet(10, 10, None, 10)) == pytest.approx(10.0, abs=1e-9)
    assert composite(ScoreSheet(0, 0, None, 0)) == 0.0


def test_composite_is_linear_in_the_sheet():
    for sheet in (ScoreSheet(8, 6, 4, 2), ScoreSheet(8, 6, None, 2)):
        halved = ScoreSheet(
            sheet.helpfulness / 2,
            sheet.correctness / 2,
            None if sheet.presentation is None else sheet.presentation / 2,
            sheet.instruction_following / 2,
        )
        assert composite(halved) == pytest.approx(composite(sheet) / 2, abs=1e-9)


def test_component_scores_validated():
    with pytest.raises(OutOfRange):
        ScoreSheet(11, 5, 5, 5)
    with pytest.raises(OutOfRange):
        ScoreSheet(5, -0.1, 5, 5)
    with pytest.raises(OutOfRange):
        ScoreSheet(5, 5, 10.5, 5)
    ScoreSheet(0, 10, None, 5)  # boundary values and n/a are fine


def test_weights_must_sum_to_one():
    with pytest.raises(OutOfRange):
        CompositeWeights(0.5, 0.5, 0.5, 0.5)
    even = CompositeWeights(0.25, 0.25, 0.25, 0.25)
    assert composite(ScoreSheet(4, 8, 0, 8), even) == pytest.approx(5.0)


# -- blinded assignment ------------------------------------------------------


def test_assign_blind_is_deterministic():
    args = (["t1", "t2"], ["orion", "baseline"], list(EVALUATORS), 42)
    first = assignments_to_json(assign_blind(*args))
    second = assignments_to_json(assign_blind(*args))
    assert first == second
    different = assignments_to_json(assign_blind(["t1", "t2"], ["orion", "baseline"], list(EVALUATORS), 43))
    assert different != first


def test_assign_blind_guards():
    with pytest.raises(TooFewEvaluators):
        assign_blind(["t1"], ["m1"], ["e1", "e2"], 1)
    with pytest.raises(TooManyModels):
        assign_blind(["t1"], ["m1", "m2", "m3", "m4", "m5"], list(EVALUATORS), 1)


def test_assignment_shape_and_unblinding():
    (a, *_rest) = assign_blind(["t1"], ["orion", "baseline"], list(EVALUATORS), 7)
    assert set(a.label_perm) == {"orion", "baseline"}
    assert sorted(a.label_perm.values()) == ["A", "B"]
    assert sorted(a.order) == ["A", "B"]
    assert a.model_for(a.label_perm["orion"]) == "orion"
    with pytest.raises(UnknownLabel):
        a.model_for("D")


def test_assignment_json_round_trip():
    assignments = assign_blind(["t1", "t2"], ["m1", "m2", "m3"], list(EVALUATORS), 5)
    text = assignments_to_json(assignments)
    back = assignments_from_json(text)
    assert [a.to_json() for a in back] == [a.to_json() for a in assignments]
    # stable serialization: keys sorted, so re-serializing is byte-identical
    assert assignments_to_json(back) == text


def test_all_permutations_reachable_with_four_models():
    tasks = [f"t{i}" for i in range(120)]
    assignments = assign_blind(tasks, ["m1", "m2", "m3", "m4"], list(EVALUATORS), 11)
    perms = {tuple(a.label_perm[m] for m in ("m1", "m2", "m3", "m4")) for a in assignments}
    assert len(perms) == 24


def test_evaluator_draws_are_independent():
    tasks = [f"t{i}" for i in range(200)]
    assignments = assign_blind(tasks, ["m1", "m2", "m3", "m4"], list(EVALUATORS), 3)
    by_pair = {(a.task_id, a.evaluator_id): a for a in assignments}
    same = sum(
        1
        for t in tasks
        if by_pair[(t, "e1")].label_perm == by_pair[(t, "e2")].label_perm
    )
    # matching by chance is 1/24; anything near lockstep means a shared stream
    assert same / len(tasks) < 0.15


# -- score ingest ------------------------------------------------------------

MAIN_CSV = """task_id,evaluator_id,label,helpfulness,correctness,presentation,instruction_following
t1,e1,A,8,6,9,7
t1,e1,B,10,10,10,10
t2,e2,A,8,6,,7
"""

APPENDIX_CSV = """task_id,evaluator_id,label,Task Completion,Output Accuracy,Visual Quality,Task Appropriateness
t1,e1,A,8,6,9,7
"""


def test_read_scores_main_headers_and_blank_presentation():
    records = read_scores_csv(MAIN_CSV.splitlines())
    assert len(records) == 3
    assert records[0].sheet == ScoreSheet(8, 6, 9, 7)
    assert records[2].sheet.presentation is None
    # ingest stays blinded: rows carry labels, never model names
    assert {r.label for r in records} == {"A", "B"}


def test_read_scores_appendix_headers_alias_to_same_columns():
    (record,) = read_scores_csv(APPENDIX_CSV.splitlines())
    assert record.sheet == ScoreSheet(8, 6, 9, 7)
    assert composite(record.sheet) == pytest.approx(7.35, abs=1e-9)


def test_read_scores_missing_column_rejected():
    bad = "task_id,evaluator_id,label,h,c,p\nt1,e1,A,1,2,3\n"
    with pytest.raises(OrionError, match="missing columns"):
        read_scores_csv(bad.splitlines())


# -- disagreement and aggregation --------------------------------------------


def test_disagreement_threshold_is_strict():
    assert flag_disagreement("t", "m", [ScoreSheet(10, 10, 10, 10), ScoreSheet(7.5, 7.5, 7.5, 7.5)])
    assert not flag_disagreement("t", "m", [ScoreSheet(10, 10, 10, 10), ScoreSheet(8, 8, 8, 8)])
    with pytest.raises(ValueError):
        flag_disagreement("t", "m", [ScoreSheet(5, 5, 5, 5)])


def scores_for(assignments, per_model_sheets):
    records = []
    for a in assignments:
        for model, sheet in per_model_sheets.items():
            records.append(ScoreRecord(a.task_id, a.evaluator_id, a.label_perm[model], sheet))
    return records


def test_aggregate_unblinds_and_averages():
    assignments = assign_blind(["t1", "t2"], ["orion", "baseline"], list(EVALUATORS), 9)
    records = scores_for(
        assignments,
        {"orion": ScoreSheet(10, 10, 10, 10), "baseline": ScoreSheet(8, 6, 9, 7)},
    )
    report = aggregate(records, assignments, task_categories={"t1": "image", "t2": "video"})
    assert report.overall["orion"] == pytest.approx(10.0, abs=1e-9)
    assert report.overall["baseline"] == pytest.approx(7.35, abs=1e-9)
    assert report.per_task["baseline"] == {
        "t1": pytest.approx(7.35),
        "t2": pytest.approx(7.35),
    }
    assert report.per_category["orion"] == {
        "image": pytest.approx(10.0),
        "video": pytest.approx(10.0),
    }
    assert report.evaluator_counts == {"t1": 3, "t2": 3}
    assert report.flags == []
    markdown = report.to_markdown()
    assert "| orion |" in markdown and "| baseline |" in markdown


def test_aggregate_flags_wide_spread_pairs():
    assignments = assign_blind(["t1"], ["orion", "baseline"], list(EVALUATORS), 9)
    by_eval = {a.evaluator_id: a for a in assignments}
    records = [
        ScoreRecord("t1", "e1", by_eval["e1"].label_perm["baseline"], ScoreSheet(10, 10, 10, 10)),
        ScoreRecord("t1", "e2", by_eval["e2"].label_perm["baseline"], ScoreSheet(7.5, 7.5, 7.5, 7.5)),
    ]
    report = aggregate(records, assignments)
    assert len(report.flags) == 1
    flag = report.flags[0]
    assert flag["task_id"] == "t1" and flag["model"] == "baseline"
    assert flag["spread_pp"] == pytest.approx(25.0)
    assert "25.0 pp" in report.to_markdown()


def test_aggregate_rejects_rows_without_assignment():
    assignments = assign_blind(["t1"], ["m1"], list(EVALUATORS), 1)
    stray = [ScoreRecord("t9", "e1", "A", ScoreSheet(5, 5, 5, 5))]
    with pytest.raises(UnknownLabel):
        aggregate(stray, assignments)


# -- benchmark runner --------------------------------------------------------


def test_run_benchmark_with_stub_endpoint():
    def endpoint(prompt, files):
        if "explode" in prompt:
            raise RuntimeError("endpoint down")
        return f"stub answer to: {prompt}"

    items = [
        BenchmarkItem("good", "say hi", (), lambda a: "stub answer" in a),
        BenchmarkItem("wrong", "say hi", (), lambda a: "impossible" in a),
        BenchmarkItem("broken", "explode now", (), lambda a: True),
    ]
    run = run_benchmark(items, endpoint, concurrency=2)
    assert run.total == 3 and run.correct == 1
    assert run.accuracy == pytest.approx(1 / 3)
    by_id = {r["item_id"]: r for r in run.results}
    assert by_id["broken"]["ok"] is False
    assert "RuntimeError" in by_id["broken"]["error"]
    assert json.dumps(run.to_json())  # serializable


def test_run_benchmark_empty():
    run = run_benchmark([], lambda p, f: "x")
    assert run.total == 0 and run.accuracy == 0.0


def test_toy_benchmark_items_reference_bundled_fixtures():
    items = toy_benchmark()
    assert len(items) == 10
    assert len({i.item_id for i in items}) == 10
    for item in items:
        for path in item.files:
            assert Path(path).exists(), path
