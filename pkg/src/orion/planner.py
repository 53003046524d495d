"""Instruction -> validated tool DAG.

Plans are JSON-serializable documents: nodes invoke registered tools, inputs
are bindings (literal, reference into another node's output, or an uploaded
file), and `final` names what the answer is built from. The shipped backend
is a rule table (regex -> plan template); model-backed planning plugs in
through the same seam.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Mapping, Optional, Sequence

from orion.errors import OrionError
from orion.model.timecode import MalformedTimecode, parse_timecode
from orion.registry import ToolRegistry, UnknownTool
from orion.schema import validate_fragment


class NoApplicablePattern(OrionError):
    pass


class BackendUnavailable(OrionError):
    def __init__(self, message: str, raw: str = "") -> None:
        self.raw = raw
        super().__init__(message)


class UnknownHint(OrionError):
    pass


class InvalidPlan(OrionError):
    def __init__(self, errors: Sequence["PlanError"]) -> None:
        self.errors = list(errors)
        super().__init__("; ".join(str(e) for e in errors))


# -- bindings and plan structure -------------------------------------------


@dataclass(frozen=True)
class Lit:
    value: Any

    def to_json(self) -> dict:
        return {"lit": self.value}


@dataclass(frozen=True)
class Ref:
    node_id: str
    path: str

    def to_json(self) -> dict:
        return {"ref": {"node": self.node_id, "path": self.path}}


@dataclass(frozen=True)
class UserFile:
    file_id: str

    def to_json(self) -> dict:
        return {"file": self.file_id}


Binding = Lit | Ref | UserFile


def binding_from_json(d: Mapping[str, Any]) -> Binding:
    if "lit" in d:
        return Lit(d["lit"])
    if "ref" in d:
        return Ref(node_id=d["ref"]["node"], path=d["ref"]["path"])
    if "file" in d:
        return UserFile(file_id=d["file"])
    raise ValueError(f"not a binding: {d!r}")


@dataclass(frozen=True)
class PlanNode:
    id: str
    tool: str
    inputs: Mapping[str, Binding]
    expect: Optional[str] = None

    def to_json(self) -> dict:
        d: dict[str, Any] = {
            "id": self.id,
            "tool": self.tool,
            "inputs": {k: b.to_json() for k, b in self.inputs.items()},
        }
        if self.expect is not None:
            d["expect"] = self.expect
        return d


@dataclass(frozen=True)
class Plan:
    nodes: tuple[PlanNode, ...]
    final: Binding
    rationale: str = ""

    def node(self, node_id: str) -> PlanNode:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    def dependencies(self, node_id: str) -> set[str]:
        return {b.node_id for b in self.node(node_id).inputs.values() if isinstance(b, Ref)}

    def descendants(self, node_id: str) -> set[str]:
        """node_id plus everything that depends on it, transitively."""
        out = {node_id}
        changed = True
        while changed:
            changed = False
            for n in self.nodes:
                if n.id not in out and self.dependencies(n.id) & out:
                    out.add(n.id)
                    changed = True
        return out

    def to_json(self) -> dict:
        return {
            "nodes": [n.to_json() for n in self.nodes],
            "final": self.final.to_json(),
            "rationale": self.rationale,
        }

    @staticmethod
    def from_json(d: Mapping[str, Any]) -> "Plan":
        nodes = tuple(
            PlanNode(
                id=n["id"],
                tool=n["tool"],
                inputs={k: binding_from_json(b) for k, b in n["inputs"].items()},
                expect=n.get("expect"),
            )
            for n in d["nodes"]
        )
        return Plan(nodes=nodes, final=binding_from_json(d["final"]), rationale=d.get("rationale", ""))


# -- validation -------------------------------------------------------------


@dataclass(frozen=True)
class PlanError:
    kind: str
    where: str
    detail: str

    def __str__(self) -> str:
        return f"{self.kind} at {self.where}: {self.detail}"


def validate_plan(plan: Plan, registry: ToolRegistry) -> list[PlanError]:
    errors: list[PlanError] = []
    ids = [n.id for n in plan.nodes]
    declared = set(ids)
    for node_id in sorted({i for i in ids if ids.count(i) > 1}):
        errors.append(PlanError("DuplicateNodeId", node_id, "node id declared more than once"))

    for node in plan.nodes:
        try:
            desc = registry.get(node.tool)
        except UnknownTool:
            errors.append(PlanError("UnknownTool", node.id, f"no tool named {node.tool!r}"))
            continue
        for param in desc.input_schema.required:
            if param not in node.inputs:
                errors.append(PlanError("MissingParam", node.id, f"required param {param!r} unbound"))
        for param, binding in node.inputs.items():
            if isinstance(binding, Ref):
                if binding.node_id not in declared:
                    errors.append(
                        PlanError("UnresolvedRef", node.id, f"ref to undeclared node {binding.node_id!r}")
                    )
                if not binding.path:
                    errors.append(PlanError("UnresolvedRef", node.id, "empty ref path"))
            elif isinstance(binding, Lit):
                fragment = desc.input_schema.property_schema(param)
                if fragment is not None:
                    for v in validate_fragment(binding.value, fragment):
                        errors.append(
                            PlanError("LitSchema", node.id, f"param {param!r} {v.path}: {v.kind} ({v.detail})")
                        )

    if isinstance(plan.final, Ref) and plan.final.node_id not in declared:
        errors.append(PlanError("UnresolvedRef", "final", f"ref to undeclared node {plan.final.node_id!r}"))

    # cycle sweep over ref edges, reported once with the offending nodes
    deps = {
        n.id: {b.node_id for b in n.inputs.values() if isinstance(b, Ref) and b.node_id in declared}
        for n in plan.nodes
    }
    remaining = dict(deps)
    while remaining:
        free = [i for i, ds in remaining.items() if not (ds & set(remaining))]
        if not free:
            errors.append(PlanError("Cycle", ",".join(sorted(remaining)), "reference cycle"))
            break
        for i in free:
            del remaining[i]
    return errors


# -- rule-based planner ------------------------------------------------------


_CAPTURE_RE = re.compile(r"\$(\d)")


def _substitute(template: Any, match: "re.Match[str]", file_ids: Sequence[str]) -> Any:
    if isinstance(template, str):
        return _CAPTURE_RE.sub(lambda m: match.group(int(m.group(1))) or "", template)
    if isinstance(template, list):
        return [_substitute(v, match, file_ids) for v in template]
    if isinstance(template, dict):
        if set(template) == {"$timecode"}:
            return parse_timecode(_substitute(template["$timecode"], match, file_ids))
        if set(template) == {"$int"}:
            return int(_substitute(template["$int"], match, file_ids))
        if set(template) == {"$split"}:
            raw = _substitute(template["$split"], match, file_ids)
            return [part.strip() for part in raw.split(",") if part.strip()]
        return {k: _substitute(v, match, file_ids) for k, v in template.items()}
    return template


def _instantiate_binding(spec: Any, match: "re.Match[str]", file_ids: Sequence[str]) -> Binding:
    if "lit" in spec:
        return Lit(_substitute(spec["lit"], match, file_ids))
    if "ref" in spec:
        return Ref(node_id=spec["ref"]["node"], path=spec["ref"]["path"])
    if "file" in spec:
        index = int(spec["file"])
        if index >= len(file_ids):
            raise IndexError(index)
        return UserFile(file_id=file_ids[index])
    raise ValueError(f"bad binding template {spec!r}")


class RulePlanner:
    """Longest-prefix regex table -> plan templates. Pure and deterministic."""

    def __init__(self, table: Optional[list[dict]] = None) -> None:
        if table is None:
            table = json.loads(patterns_path().read_text())["patterns"]
        self.rules = [(re.compile(entry["pattern"], re.IGNORECASE), entry) for entry in table]
        for _, entry in self.rules:
            ids = [n["id"] for n in entry["plan"]["nodes"]]
            if ids != [f"n{i + 1}" for i in range(len(ids))]:
                raise ValueError(f"template node ids must be n1..nk, got {ids}")

    def build_plan(self, instruction: str, file_ids: Sequence[str], context_text: str = "") -> Plan:
        text = instruction.strip()
        best: Optional[tuple[int, int, "re.Match[str]", dict]] = None
        for order, (pattern, entry) in enumerate(self.rules):
            m = pattern.match(text)
            if m is None:
                continue
            candidate = (-m.end(), order, m, entry)
            if best is None or candidate[:2] < best[:2]:
                best = candidate
        if best is None:
            raise NoApplicablePattern(f"no pattern matches {text[:80]!r}")
        _, _, m, entry = best
        template = entry["plan"]
        try:
            nodes = tuple(
                PlanNode(
                    id=n["id"],
                    tool=n["tool"],
                    inputs={k: _instantiate_binding(b, m, file_ids) for k, b in n["inputs"].items()},
                    expect=n.get("expect"),
                )
                for n in template["nodes"]
            )
            final = _instantiate_binding(template["final"], m, file_ids)
        except IndexError as exc:
            raise NoApplicablePattern(
                f"pattern {entry['pattern']!r} needs file #{exc.args[0]} but {len(file_ids)} provided"
            ) from exc
        except (MalformedTimecode, ValueError) as exc:
            # matched the surface form but a captured value doesn't parse
            raise NoApplicablePattern(f"cannot instantiate plan for {text[:80]!r}: {exc}") from exc
        return Plan(nodes=nodes, final=final, rationale=template.get("rationale", ""))


class ModelPlanner:
    """Adapter seam for a model-backed planner: callable returns plan JSON text."""

    SYSTEM_PROMPT = (
        "Decompose the instruction into a JSON plan over the given tool catalog. "
        'Reply with {"nodes": [...], "final": ..., "rationale": "..."} only.'
    )

    def __init__(self, complete: Callable[[str, str, str], str], registry: ToolRegistry) -> None:
        self.complete = complete
        self.catalog_json = json.dumps([d.to_json() for d in registry.list()])

    def build_plan(self, instruction: str, file_ids: Sequence[str], context_text: str = "") -> Plan:
        try:
            raw = self.complete(self.SYSTEM_PROMPT, instruction, self.catalog_json)
        except Exception as exc:
            raise BackendUnavailable(f"planner backend failed: {exc}") from exc
        try:
            return Plan.from_json(json.loads(raw))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise BackendUnavailable(f"planner returned unparseable plan: {exc}", raw=raw) from exc


def plan(
    instruction: str,
    file_ids: Sequence[str],
    registry: ToolRegistry,
    backend,
    context_text: str = "",
) -> Plan:
    built = backend.build_plan(instruction, file_ids, context_text)
    errors = validate_plan(built, registry)
    if errors:
        raise InvalidPlan(errors)
    return built


# -- refinement --------------------------------------------------------------


def _next_node_id(plan_: Plan) -> str:
    taken = {n.id for n in plan_.nodes}
    k = len(plan_.nodes) + 1
    while f"n{k}" in taken:
        k += 1
    return f"n{k}"


def refine_plan(plan_: Plan, verdict) -> Plan:
    """Apply a refine verdict's hint; anything else is contract misuse."""
    if getattr(verdict, "action", None) != "refine" or not verdict.node_id or not verdict.hint:
        raise UnknownHint(f"refine_plan needs a refine verdict with node and hint, got {verdict!r}")
    hint = verdict.hint
    target = plan_.node(verdict.node_id)

    if "widen_query" in hint:
        binding = target.inputs.get("query")
        if not isinstance(binding, Lit) or not isinstance(binding.value, str):
            raise UnknownHint(f"node {target.id!r} has no literal query to widen")
        current = binding.value
        have = {t.strip().casefold() for t in current.split(",")}
        extra = [t.strip() for t in str(hint["widen_query"]).split(",") if t.strip()]
        widened = current
        for term in extra:
            if term.casefold() not in have:
                widened += ", " + term
                have.add(term.casefold())
        inputs = dict(target.inputs)
        inputs["query"] = Lit(widened)
        nodes = tuple(
            n if n.id != target.id else PlanNode(id=n.id, tool=n.tool, inputs=inputs, expect=n.expect)
            for n in plan_.nodes
        )
        return Plan(nodes=nodes, final=plan_.final, rationale=plan_.rationale)

    if "insert_before" in hint:
        spec = hint["insert_before"]
        new_id = _next_node_id(plan_)
        inserted = PlanNode(
            id=new_id,
            tool=spec["tool"],
            inputs={k: binding_from_json(b) for k, b in spec["inputs"].items()},
            expect=None,
        )
        rebind_param = spec["rebind_param"]
        rebind_path = spec.get("rebind_path", "$")
        inputs = dict(target.inputs)
        if rebind_param not in inputs:
            raise UnknownHint(f"node {target.id!r} has no param {rebind_param!r} to rebind")
        inputs[rebind_param] = Ref(node_id=new_id, path=rebind_path)
        nodes = []
        for n in plan_.nodes:
            if n.id == target.id:
                nodes.append(inserted)
                nodes.append(PlanNode(id=n.id, tool=n.tool, inputs=inputs, expect=n.expect))
            else:
                nodes.append(n)
        return Plan(nodes=tuple(nodes), final=plan_.final, rationale=plan_.rationale)

    raise UnknownHint(f"unsupported hint {sorted(hint)}")


def patterns_path() -> Path:
    return Path(str(resources.files("orion").joinpath("data/patterns.json")))
