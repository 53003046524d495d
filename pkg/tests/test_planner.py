from __future__ import annotations

import pytest

from orion.fixtures.toolbox import register_all
from orion.planner import (
    BackendUnavailable,
    InvalidPlan,
    Lit,
    ModelPlanner,
    NoApplicablePattern,
    Plan,
    PlanNode,
    Ref,
    RulePlanner,
    UnknownHint,
    UserFile,
    binding_from_json,
    plan as build_validated_plan,
    refine_plan,
    validate_plan,
)
from orion.reflector import Verdict
from orion.registry import ToolRegistry
from orion.store import ArtifactStore

FILE = "file_0123456789abcdef"


@pytest.fixture()
def registry(tmp_path) -> ToolRegistry:
    store = ArtifactStore(tmp_path / "store", signing_key="test-signing-key")
    return register_all(ToolRegistry(), store)


def single_node_plan(tool: str = "caption", **inputs) -> Plan:
    bound = {"image": UserFile(FILE), **inputs}
    return Plan(nodes=(PlanNode(id="n1", tool=tool, inputs=bound),), final=Ref("n1", "$"))


# -- bindings and plan documents ---------------------------------------------


def test_binding_json_round_trip():
    for binding in (Lit("x"), Lit({"k": [1]}), Ref("n1", "detections[0].bbox"), UserFile(FILE)):
        assert binding_from_json(binding.to_json()) == binding
    with pytest.raises(ValueError):
        binding_from_json({"mystery": 1})


def test_plan_json_round_trip_and_helpers():
    p = Plan(
        nodes=(
            PlanNode(id="n1", tool="detect", inputs={"image": UserFile(FILE), "query": Lit("car")}),
            PlanNode(
                id="n2",
                tool="crop",
                inputs={"image": UserFile(FILE), "bbox": Ref("n1", "detections[0].bbox")},
            ),
            PlanNode(id="n3", tool="ocr_image", inputs={"image": Ref("n2", "image")}, expect="time"),
        ),
        final=Ref("n3", "$"),
        rationale="read the region",
    )
    assert Plan.from_json(p.to_json()) == p
    assert p.dependencies("n1") == set()
    assert p.dependencies("n2") == {"n1"}
    assert p.descendants("n1") == {"n1", "n2", "n3"}
    assert p.descendants("n2") == {"n2", "n3"}
    with pytest.raises(KeyError):
        p.node("n9")


# -- static validation --------------------------------------------------------


def kinds(errors) -> set[str]:
    return {e.kind for e in errors}


def test_validate_clean_plan(registry):
    assert validate_plan(single_node_plan(), registry) == []


def test_validate_duplicate_node_id(registry):
    p = Plan(
        nodes=(
            PlanNode(id="n1", tool="caption", inputs={"image": UserFile(FILE)}),
            PlanNode(id="n1", tool="caption", inputs={"image": UserFile(FILE)}),
        ),
        final=Ref("n1", "$"),
    )
    errors = validate_plan(p, registry)
    assert kinds(errors) == {"DuplicateNodeId"}
    assert len([e for e in errors if e.kind == "DuplicateNodeId"]) == 1


def test_validate_unknown_tool(registry):
    assert kinds(validate_plan(single_node_plan(tool="imagine"), registry)) == {"UnknownTool"}


def test_validate_missing_param(registry):
    p = Plan(
        nodes=(PlanNode(id="n1", tool="detect", inputs={"image": UserFile(FILE)}),),
        final=Ref("n1", "$"),
    )
    errors = validate_plan(p, registry)
    assert kinds(errors) == {"MissingParam"}
    assert "query" in errors[0].detail


def test_validate_unresolved_refs(registry):
    p = Plan(
        nodes=(
            PlanNode(
                id="n1",
                tool="detect",
                inputs={"image": UserFile(FILE), "query": Ref("n7", "$")},
            ),
        ),
        final=Ref("n8", "$"),
    )
    errors = validate_plan(p, registry)
    assert kinds(errors) == {"UnresolvedRef"}
    wheres = {e.where for e in errors}
    assert wheres == {"n1", "final"}
    empty_path = Plan(
        nodes=(
            PlanNode(
                id="n1",
                tool="detect",
                inputs={"image": UserFile(FILE), "query": Ref("n1", "")},
            ),
        ),
        final=Ref("n1", "$"),
    )
    assert any("empty ref path" in e.detail for e in validate_plan(empty_path, registry))


def test_validate_literal_against_param_schema(registry):
    errors = validate_plan(single_node_plan(tool="detect", query=Lit(7)), registry)
    assert kinds(errors) == {"LitSchema"}
    assert "query" in errors[0].detail
    ok = validate_plan(single_node_plan(tool="detect", query=Lit("car")), registry)
    assert ok == []


def test_validate_cycle(registry):
    p = Plan(
        nodes=(
            PlanNode(id="n1", tool="caption", inputs={"image": Ref("n2", "$")}),
            PlanNode(id="n2", tool="caption", inputs={"image": Ref("n1", "$")}),
        ),
        final=Ref("n1", "$"),
    )
    errors = validate_plan(p, registry)
    assert kinds(errors) == {"Cycle"}
    assert errors[0].where == "n1,n2"


def test_plan_entrypoint_raises_invalid_plan(registry):
    backend = RulePlanner(
        table=[
            {
                "pattern": "^broken$",
                "plan": {
                    "nodes": [{"id": "n1", "tool": "imagine", "inputs": {}}],
                    "final": {"ref": {"node": "n1", "path": "$"}},
                },
            }
        ]
    )
    with pytest.raises(InvalidPlan) as exc_info:
        build_validated_plan("broken", [FILE], registry, backend)
    assert any(e.kind == "UnknownTool" for e in exc_info.value.errors)
    good = build_validated_plan("What is in this image?", [FILE], registry, RulePlanner())
    assert good.nodes[0].tool == "caption"


# -- the bundled rule table ---------------------------------------------------


def test_rule_caption_and_case_insensitivity():
    planner = RulePlanner()
    p = planner.build_plan("WHAT IS IN THIS IMAGE?", [FILE])
    assert [n.tool for n in p.nodes] == ["caption"]
    assert p.nodes[0].inputs["image"] == UserFile(FILE)
    assert p.final == Ref("n1", "$")


def test_rule_clock_three_node_pipeline():
    planner = RulePlanner()
    p = planner.build_plan("Crop into the clock in the image and extract the time shown.", [FILE])
    assert [(n.id, n.tool) for n in p.nodes] == [
        ("n1", "detect"),
        ("n2", "crop"),
        ("n3", "ocr_image"),
    ]
    assert p.nodes[0].inputs["query"] == Lit("clock")
    assert p.nodes[1].inputs["bbox"] == Ref("n1", "detections[0].bbox")
    assert p.nodes[2].inputs["image"] == Ref("n2", "image")
    assert p.final == Ref("n3", "$")


def test_rule_capture_substitution():
    planner = RulePlanner()
    p = planner.build_plan("Find the traffic light in the image", [FILE])
    assert p.nodes[0].tool == "detect"
    assert p.nodes[0].inputs["query"] == Lit("traffic light")
    counted = planner.build_plan("Count the car in this image", [FILE])
    assert counted.nodes[0].tool == "point"
    assert counted.nodes[0].inputs["query"] == Lit("car")


def test_rule_timecode_transform():
    planner = RulePlanner()
    p = planner.build_plan("Trim the video from 00:23 to 00:28.", [FILE])
    assert p.nodes[0].tool == "trim"
    assert p.nodes[0].inputs["seg"] == Lit({"start_ms": 23000, "end_ms": 28000})
    with_millis = planner.build_plan("Trim the video from 00:23.500 to 00:28", [FILE])
    assert with_millis.nodes[0].inputs["seg"] == Lit({"start_ms": 23500, "end_ms": 28000})
    with pytest.raises(NoApplicablePattern):
        planner.build_plan("Trim the video from banana to apple", [FILE])


def test_rule_int_transform():
    planner = RulePlanner()
    p = planner.build_plan("Extract the top 2 highlights from this video", [FILE])
    assert p.nodes[0].inputs["k"] == Lit(2)


def test_rule_split_transform():
    planner = RulePlanner()
    p = planner.build_plan("Redact KX-4471, John Miller from the document.", [FILE])
    assert p.nodes[0].inputs["targets"] == Lit(["KX-4471", "John Miller"])


def test_rule_temporal_ground_final_path():
    planner = RulePlanner()
    p = planner.build_plan("When does the finale happen in this video?", [FILE])
    assert p.nodes[0].tool == "temporal_ground"
    assert p.final == Ref("n1", "segment")


def test_rule_no_match_and_missing_file():
    planner = RulePlanner()
    with pytest.raises(NoApplicablePattern):
        planner.build_plan("compose a sonnet about entropy", [FILE])
    with pytest.raises(NoApplicablePattern) as exc_info:
        planner.build_plan("What is in this image?", [])
    assert "file #0" in str(exc_info.value)


def test_longest_match_wins_with_table_order_ties():
    def entry(pattern: str, query: str) -> dict:
        return {
            "pattern": pattern,
            "plan": {
                "nodes": [
                    {
                        "id": "n1",
                        "tool": "detect",
                        "inputs": {"image": {"file": 0}, "query": {"lit": query}},
                    }
                ],
                "final": {"ref": {"node": "n1", "path": "$"}},
            },
        }

    planner = RulePlanner(
        table=[entry("^find it", "short"), entry("^find it now$", "long"), entry("^find it", "dup")]
    )
    assert planner.build_plan("find it now", [FILE]).nodes[0].inputs["query"] == Lit("long")
    assert planner.build_plan("find it", [FILE]).nodes[0].inputs["query"] == Lit("short")


def test_template_node_ids_must_be_sequential():
    with pytest.raises(ValueError):
        RulePlanner(
            table=[
                {
                    "pattern": "^x$",
                    "plan": {
                        "nodes": [{"id": "step_a", "tool": "caption", "inputs": {}}],
                        "final": {"ref": {"node": "step_a", "path": "$"}},
                    },
                }
            ]
        )


# -- the model-backed seam ----------------------------------------------------


def test_model_planner_parses_plan(registry):
    doc = single_node_plan().to_json()

    def complete(system: str, instruction: str, catalog: str) -> str:
        assert "tools" not in instruction  # catalog travels separately
        import json

        return json.dumps(doc)

    planner = ModelPlanner(complete, registry)
    assert planner.build_plan("whatever", [FILE]) == single_node_plan()


def test_model_planner_backend_failures(registry):
    def broken(system, instruction, catalog):
        raise ConnectionError("socket closed")

    with pytest.raises(BackendUnavailable):
        ModelPlanner(broken, registry).build_plan("x", [])

    def garbage(system, instruction, catalog):
        return "not json at all"

    with pytest.raises(BackendUnavailable) as exc_info:
        ModelPlanner(garbage, registry).build_plan("x", [])
    assert exc_info.value.raw == "not json at all"


# -- refinement --------------------------------------------------------------


def detect_plan(query: str = "car") -> Plan:
    return Plan(
        nodes=(
            PlanNode(
                id="n1", tool="detect", inputs={"image": UserFile(FILE), "query": Lit(query)}
            ),
        ),
        final=Ref("n1", "$"),
    )


def test_widen_query_merges_terms():
    refined = refine_plan(
        detect_plan("car"),
        Verdict(action="refine", node_id="n1", hint={"widen_query": "vehicle, Car, truck"}),
    )
    assert refined.nodes[0].inputs["query"] == Lit("car, vehicle, truck")
    assert refined.final == Ref("n1", "$")


def test_widen_query_requires_literal_query():
    p = Plan(
        nodes=(PlanNode(id="n1", tool="caption", inputs={"image": UserFile(FILE)}),),
        final=Ref("n1", "$"),
    )
    with pytest.raises(UnknownHint):
        refine_plan(p, Verdict(action="refine", node_id="n1", hint={"widen_query": "x"}))


def test_insert_before_rebinds_param():
    hint = {
        "insert_before": {
            "tool": "rotate",
            "inputs": {"image": {"file": FILE}, "quarter_turns_ccw": {"lit": 1}},
            "rebind_param": "image",
            "rebind_path": "image",
        }
    }
    refined = refine_plan(detect_plan(), Verdict(action="refine", node_id="n1", hint=hint))
    assert [n.tool for n in refined.nodes] == ["rotate", "detect"]
    inserted = refined.nodes[0]
    assert inserted.id == "n2"
    assert refined.nodes[1].inputs["image"] == Ref("n2", "image")
    assert refined.nodes[1].inputs["query"] == Lit("car")


def test_refine_rejects_misuse():
    with pytest.raises(UnknownHint):
        refine_plan(detect_plan(), Verdict(action="finalize"))
    with pytest.raises(UnknownHint):
        refine_plan(
            detect_plan(), Verdict(action="refine", node_id="n1", hint={"teleport": True})
        )
    with pytest.raises(UnknownHint):
        refine_plan(
            detect_plan(),
            Verdict(
                action="refine",
                node_id="n1",
                hint={
                    "insert_before": {
                        "tool": "rotate",
                        "inputs": {},
                        "rebind_param": "video",
                    }
                },
            ),
        )
