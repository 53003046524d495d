"""Plan execution: dependency-aware scheduling over the tool registry.

Independent nodes run concurrently up to a weight budget (gpu-hinted tools
count double). Failures with a nondeterministic flavor (timeouts, backend
errors) are retried per node; schema violations on input are not. A node out
of attempts fails the plan after in-flight work drains, and the trace always
comes back complete.
"""
from __future__ import annotations

import re
import time
from concurrent.futures import FIRST_COMPLETED, Future, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional

from orion.errors import OrionError
from orion.planner import Binding, Lit, Plan, Ref, UserFile
from orion.registry import CostHint, InputSchemaViolation, ToolRegistry, ToolResult


class UnreadyRef(OrionError):
    pass


class PathMiss(OrionError):
    def __init__(self, node_id: str, path: str, detail: str) -> None:
        self.node_id = node_id
        self.path = path
        super().__init__(f"path {path!r} into {node_id}: {detail}")


@dataclass(frozen=True)
class ExecPolicy:
    max_parallel: int = 4
    node_timeout_ms: int = 30_000
    max_attempts: int = 2

    def __post_init__(self) -> None:
        if self.max_parallel < 1 or self.max_attempts < 1:
            raise ValueError("max_parallel and max_attempts must be at least 1")


@dataclass(frozen=True)
class StepRecord:
    node_id: str
    attempt: int
    started_at: float
    ended_at: float
    result: ToolResult

    def to_json(self) -> dict:
        return {
            "node_id": self.node_id,
            "attempt": self.attempt,
            "started_at": self.started_at,
            "ended_at": self.ended_at,
            "result": self.result.to_json(),
        }


@dataclass
class ExecutionTrace:
    steps: list[StepRecord] = field(default_factory=list)
    status: str = "succeeded"  # succeeded | failed | budget_exhausted
    outputs: dict[str, ToolResult] = field(default_factory=dict)
    failed_node: Optional[str] = None

    def to_json(self) -> dict:
        d: dict[str, Any] = {
            "steps": [s.to_json() for s in self.steps],
            "status": self.status,
            "outputs": {k: v.to_json() for k, v in self.outputs.items()},
        }
        if self.failed_node is not None:
            d["failed_node"] = self.failed_node
        return d


_SEGMENT_RE = re.compile(r"([^.\[\]]+)|\[(\d+)\]")


def _parse_path(path: str) -> list[Any]:
    if path == "$":
        return []
    segments: list[Any] = []
    pos = 0
    while pos < len(path):
        if path[pos] == ".":
            pos += 1
            continue
        m = _SEGMENT_RE.match(path, pos)
        if m is None:
            raise ValueError(f"bad path {path!r} at offset {pos}")
        segments.append(m.group(1) if m.group(1) is not None else int(m.group(2)))
        pos = m.end()
    return segments


def _select(value: Any, segments: list[Any]) -> Any:
    for seg in segments:
        if isinstance(seg, int):
            if not isinstance(value, list) or seg >= len(value):
                raise KeyError(seg)
            value = value[seg]
        else:
            if not isinstance(value, Mapping) or seg not in value:
                raise KeyError(seg)
            value = value[seg]
    return value


def resolve_binding(
    binding: Binding, outputs: Mapping[str, ToolResult]
) -> Any:
    if isinstance(binding, Lit):
        return binding.value
    if isinstance(binding, UserFile):
        return {"file_id": binding.file_id}
    if isinstance(binding, Ref):
        result = outputs.get(binding.node_id)
        if result is None or not result.ok:
            raise UnreadyRef(f"node {binding.node_id!r} has no successful output")
        try:
            segments = _parse_path(binding.path)
        except ValueError as exc:
            raise PathMiss(binding.node_id, binding.path, str(exc)) from exc
        try:
            return _select(result.output, segments)
        except KeyError as exc:
            raise PathMiss(binding.node_id, binding.path, f"no element {exc.args[0]!r}") from exc
    raise TypeError(f"not a binding: {binding!r}")


def _id_order(node_id: str) -> tuple[int, str]:
    return (len(node_id), node_id)


def _weight(registry: ToolRegistry, tool: str) -> int:
    return 2 if registry.get(tool).cost_hint is CostHint.gpu else 1


def execute(
    plan: Plan,
    policy: ExecPolicy,
    registry: ToolRegistry,
    cached: Optional[Mapping[str, ToolResult]] = None,
) -> tuple[Any, ExecutionTrace]:
    """Run the plan; nodes listed in ``cached`` with ok results are reused.

    Returns (final_value, trace); final_value is None unless status is
    succeeded.
    """
    trace = ExecutionTrace()
    outputs: dict[str, ToolResult] = {
        k: v for k, v in (cached or {}).items() if v.ok and any(n.id == k for n in plan.nodes)
    }
    trace.outputs = outputs

    deps = {n.id: plan.dependencies(n.id) for n in plan.nodes}
    pending = {n.id for n in plan.nodes if n.id not in outputs}
    attempts: dict[str, int] = {}
    in_flight: dict[Future, tuple[str, int, float]] = {}
    in_flight_weight = 0
    dead = False

    def ready() -> list[str]:
        running = {meta[0] for meta in in_flight.values()}
        return sorted(
            (
                nid
                for nid in pending
                if nid not in running and all(d in outputs for d in deps[nid])
            ),
            key=_id_order,
        )

    def run_node(node_id: str) -> ToolResult:
        node = plan.node(node_id)
        try:
            inputs = {k: resolve_binding(b, outputs) for k, b in node.inputs.items()}
        except (UnreadyRef, PathMiss) as exc:
            return ToolResult(status="error", error_message=str(exc))
        try:
            return registry.invoke(node.tool, inputs, timeout_ms=policy.node_timeout_ms)
        except InputSchemaViolation as exc:
            # deterministic: mark via a non-retryable sentinel in the message
            return ToolResult(status="error", error_message=f"input rejected: {exc}")

    with ThreadPoolExecutor(max_workers=policy.max_parallel, thread_name_prefix="exec") as pool:
        while pending or in_flight:
            if not dead:
                for node_id in ready():
                    weight = _weight(registry, plan.node(node_id).tool)
                    if in_flight and in_flight_weight + weight > policy.max_parallel:
                        break
                    attempt = attempts.get(node_id, 0) + 1
                    attempts[node_id] = attempt
                    started = time.time()
                    future = pool.submit(run_node, node_id)
                    in_flight[future] = (node_id, attempt, started)
                    in_flight_weight += weight
                    if policy.max_parallel == 1:
                        break
            if not in_flight:
                break
            done, _ = wait(list(in_flight), return_when=FIRST_COMPLETED)
            for future in done:
                node_id, attempt, started = in_flight.pop(future)
                in_flight_weight -= _weight(registry, plan.node(node_id).tool)
                result = future.result()
                trace.steps.append(
                    StepRecord(
                        node_id=node_id,
                        attempt=attempt,
                        started_at=started,
                        ended_at=time.time(),
                        result=result,
                    )
                )
                if result.ok:
                    outputs[node_id] = result
                    pending.discard(node_id)
                    continue
                retryable = not result.error_message.startswith("input rejected:")
                if retryable and attempt < policy.max_attempts and not dead:
                    continue  # stays pending, rescheduled next sweep
                pending.discard(node_id)
                dead = True
                if trace.failed_node is None:
                    trace.failed_node = node_id
            if dead and not in_flight:
                break

    if trace.failed_node is not None or pending:
        trace.status = "failed"
        if trace.failed_node is None:
            trace.failed_node = sorted(pending, key=_id_order)[0]
        return None, trace

    trace.status = "succeeded"
    try:
        final_value = resolve_binding(plan.final, outputs)
    except (UnreadyRef, PathMiss) as exc:
        trace.status = "failed"
        trace.failed_node = getattr(exc, "node_id", None)
        return None, trace
    return final_value, trace
