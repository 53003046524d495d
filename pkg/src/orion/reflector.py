"""Closed-loop verification over executed plans.

Each round runs the plan (reusing cached node outputs), checks the final
value against the requested schema, consults a judge, and acts on exactly
one verdict: finalize, retry a node, refine the plan, or fail. The loop
never hands back a final value that violates the schema, and never runs
more than max_rounds rounds.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Optional, Sequence

from orion.errors import OrionError
from orion.executor import ExecutionTrace
from orion.model.types import OutputSchema
from orion.planner import Plan, Ref, refine_plan
from orion.registry import ToolResult
from orion.schema import Violation, validate_value, violation_report


class JudgeUnavailable(OrionError):
    pass


@dataclass(frozen=True)
class Verdict:
    action: str  # finalize | retry | refine | fail
    node_id: Optional[str] = None
    hint: Optional[Mapping[str, Any]] = None
    score: Optional[float] = None
    reason: str = ""

    def __post_init__(self) -> None:
        if self.action in ("retry", "refine") and not self.node_id:
            raise ValueError(f"{self.action} verdict needs a node_id")
        if self.action == "refine" and not self.hint:
            raise ValueError("refine verdict needs a hint")

    def to_json(self) -> dict:
        d: dict[str, Any] = {"action": self.action, "reason": self.reason}
        if self.node_id is not None:
            d["node_id"] = self.node_id
        if self.hint is not None:
            d["hint"] = dict(self.hint)
        if self.score is not None:
            d["score"] = self.score
        return d


@dataclass(frozen=True)
class ReflectionPolicy:
    max_rounds: int = 3
    judge_on: str = "final_only"  # final_only | every_node

    def __post_init__(self) -> None:
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be at least 1")


@dataclass(frozen=True)
class JudgeRequest:
    instruction: str
    expect: Optional[str]
    node_id: Optional[str]
    output: Any
    artifacts: tuple = ()
    violations: Sequence[Violation] = ()


def check_conformance(value: Any, schema: OutputSchema) -> list[Violation]:
    return validate_value(value, schema)


class MockJudge:
    """Deterministic judge: schema violations demand a retry, an expectation
    with no token in common with the output demands a query widening, and
    everything else finalizes."""

    def judge(self, request: JudgeRequest) -> Verdict:
        if request.violations:
            return Verdict(
                action="retry",
                node_id=request.node_id or "n1",
                reason=f"schema violation: {violation_report(request.violations)}",
            )
        if request.expect:
            expected = {t for t in request.expect.casefold().split() if t}
            rendered = json.dumps(request.output, default=str).casefold()
            if expected and not any(t in rendered for t in expected):
                return Verdict(
                    action="refine",
                    node_id=request.node_id or "n1",
                    hint={"widen_query": request.expect},
                    reason=f"expected {request.expect!r} absent from output",
                )
        return Verdict(action="finalize", score=1.0, reason="output conforms")


@dataclass
class ReflectionResult:
    final_value: Any
    trace: ExecutionTrace
    verdicts: list[Verdict]

    @property
    def ok(self) -> bool:
        return self.trace.status == "succeeded"


ExecuteFn = Callable[[Plan, Mapping[str, ToolResult]], tuple[Any, ExecutionTrace]]


def _final_node_id(plan: Plan) -> Optional[str]:
    return plan.final.node_id if isinstance(plan.final, Ref) else None


def reflect_loop(
    plan: Plan,
    execute_fn: ExecuteFn,
    policy: ReflectionPolicy = ReflectionPolicy(),
    final_schema: Optional[OutputSchema] = None,
    judge: Optional[MockJudge] = None,
    instruction: str = "",
) -> ReflectionResult:
    judge = judge or MockJudge()
    current = plan
    cached: dict[str, ToolResult] = {}
    merged = ExecutionTrace(status="failed")
    verdicts: list[Verdict] = []

    for round_no in range(1, policy.max_rounds + 1):
        last_round = round_no == policy.max_rounds
        final_value, trace = execute_fn(current, cached)
        merged.steps.extend(trace.steps)
        merged.outputs = dict(trace.outputs)
        cached = dict(trace.outputs)

        if trace.status != "succeeded":
            failed = trace.failed_node or _final_node_id(current) or "n1"
            failure = trace.outputs.get(failed)
            reason = failure.error_message if failure else "node failed"
            for step in reversed(trace.steps):
                if step.node_id == failed:
                    reason = step.result.error_message
                    break
            if last_round:
                verdicts.append(Verdict(action="fail", node_id=failed, reason=reason))
                merged.status = "failed"
                merged.failed_node = failed
                return ReflectionResult(None, merged, verdicts)
            verdicts.append(Verdict(action="retry", node_id=failed, reason=reason))
            for nid in current.descendants(failed):
                cached.pop(nid, None)
            continue

        violations = check_conformance(final_value, final_schema) if final_schema else []
        verdict = _round_verdict(
            current, judge, instruction, final_value, violations, policy, trace.outputs
        )
        if verdict.action == "finalize" and (verdict.score is None or verdict.score >= 0.5):
            if violations:
                # a non-conformant value is never delivered, whatever the judge says
                verdict = Verdict(
                    action="fail",
                    reason=f"schema violation: {violation_report(violations)}",
                )
                verdicts.append(verdict)
                merged.status = "failed"
                return ReflectionResult(None, merged, verdicts)
            verdicts.append(verdict)
            merged.status = "succeeded"
            return ReflectionResult(final_value, merged, verdicts)
        if verdict.action == "finalize":
            verdict = Verdict(
                action="retry",
                node_id=verdict.node_id or _final_node_id(current) or "n1",
                reason=f"judge score {verdict.score} below threshold",
            )
        if verdict.action == "fail":
            verdicts.append(verdict)
            merged.status = "failed"
            return ReflectionResult(None, merged, verdicts)

        if last_round:
            verdicts.append(
                Verdict(
                    action="fail",
                    node_id=verdict.node_id,
                    hint={"best_effort": final_value},
                    reason="budget_exhausted",
                )
            )
            merged.status = "budget_exhausted"
            return ReflectionResult(None, merged, verdicts)

        verdicts.append(verdict)
        if verdict.action == "refine":
            current = refine_plan(current, verdict)
        for nid in current.descendants(verdict.node_id):
            cached.pop(nid, None)

    # unreachable: every round returns or continues, and the last round returns
    merged.status = "budget_exhausted"
    return ReflectionResult(None, merged, verdicts)


def _round_verdict(
    plan: Plan,
    judge,
    instruction: str,
    final_value: Any,
    violations: list[Violation],
    policy: ReflectionPolicy,
    outputs: Mapping[str, ToolResult],
) -> Verdict:
    final_node = _final_node_id(plan)
    candidates: list[tuple[Optional[str], Optional[str], Any, bool]] = []
    if policy.judge_on == "every_node":
        for node in plan.nodes:
            if node.expect and node.id != final_node:
                result = outputs.get(node.id)
                candidates.append((node.id, node.expect, result.output if result else None, False))
    expect = None
    if final_node is not None:
        expect = plan.node(final_node).expect
    candidates.append((final_node, expect, final_value, True))

    for node_id, expect, output, is_final in candidates:
        request = JudgeRequest(
            instruction=instruction,
            expect=expect,
            node_id=node_id,
            output=output,
            violations=violations if is_final else (),
        )
        verdict = judge.judge(request)
        if is_final or verdict.action != "finalize":
            return verdict
    return Verdict(action="finalize", score=1.0, reason="all checks passed")
