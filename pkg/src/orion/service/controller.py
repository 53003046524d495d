"""The request pipeline: context -> plan -> execute/reflect -> rendered answer.

Also owns tier routing (fast vs pro backends with graceful fallback) and
trace persistence. The HTTP layer stays thin on top of this.
"""
from __future__ import annotations

import functools
import json
import math
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence

from orion.errors import OrionError
from orion.executor import ExecPolicy, ExecutionTrace, execute
from orion.fixtures.toolbox import register_all
from orion.model.timecode import format_timecode
from orion.model.types import Message, Mode, ModelId, OutputSchema, Role
from orion.planner import Plan, RulePlanner, plan as build_plan
from orion.reflector import MockJudge, ReflectionPolicy, ReflectionResult, reflect_loop
from orion.registry import ToolRegistry
from orion.schema import violation_report
from orion.service.config import ServiceConfig
from orion.session import ContextBudget, SessionStore, retrieve_context
from orion.store import ArtifactStore
from orion.structured import StructuredOutputFailure, validate_final

FAST = "fast"
PRO = "pro"


class TierRouter:
    """Pick planner/judge backends per tier; escalate in auto mode on failure."""

    def __init__(
        self,
        planners: Mapping[str, Any],
        judges: Mapping[str, Any],
    ) -> None:
        if FAST not in planners or FAST not in judges:
            raise ValueError("fast tier backends are mandatory")
        self.planners = dict(planners)
        self.judges = dict(judges)

    def available(self, tier: str) -> bool:
        return tier in self.planners and tier in self.judges

    def route(self, model: ModelId, signals: Mapping[str, int]) -> dict:
        """Decision record for the trace; pure function of mode and signals."""
        failures = int(signals.get("reflection_failures", 0))
        decision = {"mode": model.mode.value, "tier": FAST, "escalated": False, "fallback": False}
        if model.mode is Mode.fast or failures < 1:
            return decision
        if self.available(PRO):
            decision["tier"] = PRO
            decision["escalated"] = True
        else:
            decision["fallback"] = True
        return decision


def _compact_timecode(ms: int) -> str:
    text = format_timecode(ms)
    if text.startswith("00:"):
        return text[3:]
    return text


def _render_segment(seg: Mapping[str, Any]) -> str:
    return f"{_compact_timecode(seg['start_ms'])} to {_compact_timecode(seg['end_ms'])}"


def _is_artifact_ref(value: Any) -> bool:
    return isinstance(value, Mapping) and "id" in value and "url" in value and "modality" in value


def render_answer(value: Any) -> str:
    """Deterministic text rendering of a final value for chat mode."""
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, (int, float, bool)):
        return json.dumps(value)
    if isinstance(value, Mapping):
        if "caption" in value and "tags" in value:
            tags = ", ".join(value["tags"])
            return f"{value['caption']} Tags: {tags}" if tags else str(value["caption"])
        if "answer" in value:
            return str(value["answer"])
        if "text" in value and "words" in value:
            return str(value["text"])
        if "segment" in value and isinstance(value["segment"], Mapping):
            return _render_segment(value["segment"])
        if set(value) >= {"start_ms", "end_ms"} and "caption" not in value:
            return _render_segment(value)
        if "entries" in value:
            lines = [
                f"{_render_segment(e['seg'])}: {e['caption']}" for e in value["entries"]
            ]
            return "\n".join(lines) if lines else "No segments."
        if "detections" in value:
            dets = value["detections"]
            if not dets:
                return "No matches."
            parts = [
                "{} at ({:.2f}, {:.2f}, {:.2f}, {:.2f})".format(d["label"], *d["bbox"])
                for d in dets
            ]
            return f"Found {len(dets)}: " + "; ".join(parts)
        if "points" in value and "count" in value:
            return f"Count: {value['count']}."
        if "elements" in value:
            els = value["elements"]
            if not els:
                return "No elements."
            return "Elements: " + ", ".join(e["kind"] for e in els)
        if "pages" in value:
            pages = value["pages"]
            return (
                "Relevant pages: " + ", ".join(str(p) for p in pages) if pages else "No matching pages."
            )
        if "fields" in value:
            fields = value["fields"]
            if not fields:
                return "No fields."
            return "\n".join(f"{f['name']}: {f['value']}" for f in fields)
        if "blocks" in value:
            return "\n".join(b["text"] for b in value["blocks"])
        if "highlights" in value:
            his = value["highlights"]
            if not his:
                return "No highlights."
            return "\n".join(f"{_render_segment(h['seg'])}: {h['url']}" for h in his)
        if "mask" in value and "classes" in value:
            classes = ", ".join(c["class"] for c in value["classes"]) or "none"
            return f"Mask with {value['mask']['num_labels']} labels. Classes: {classes}"
        for key in ("image", "video", "document", "artifact"):
            if key in value and _is_artifact_ref(value[key]):
                ref = value[key]
                return f"Created {ref['modality']} artifact {ref['id']}: {ref['url']}"
    return json.dumps(value, sort_keys=True)


class PlanningFailed(OrionError):
    pass


class AgentFailed(OrionError):
    def __init__(self, message: str, trace_id: Optional[str] = None) -> None:
        self.trace_id = trace_id
        super().__init__(message)


@dataclass
class CompletionOutcome:
    content: str
    trace_id: str
    structured: Any = None
    artifact_ids: tuple[str, ...] = ()
    session_id: Optional[str] = None


def token_estimate(text: str) -> int:
    return math.ceil(len(text) / 4) if text else 0


class AgentController:
    def __init__(
        self,
        config: ServiceConfig,
        router: Optional[TierRouter] = None,
        registry: Optional[ToolRegistry] = None,
        store: Optional[ArtifactStore] = None,
    ) -> None:
        self.config = config
        self.store = store or ArtifactStore(config.artifacts_dir, signing_key=config.signing_key)
        if registry is None:
            registry = ToolRegistry()
            register_all(registry, self.store, catalog=config.catalog_path)
        self.registry = registry
        self.sessions = SessionStore(config.sessions_dir)
        self.traces_dir = Path(config.traces_dir)
        self.traces_dir.mkdir(parents=True, exist_ok=True)
        if router is None:
            rule = RulePlanner(
                None
                if config.patterns_path is None
                else json.loads(Path(config.patterns_path).read_text())["patterns"]
            )
            router = TierRouter(planners={FAST: rule, PRO: rule}, judges={FAST: MockJudge(), PRO: MockJudge()})
        self.router = router
        self.exec_policy = ExecPolicy(
            max_parallel=config.max_parallel,
            node_timeout_ms=config.node_timeout_ms,
            max_attempts=config.max_attempts,
        )
        self.reflect_policy = ReflectionPolicy(max_rounds=config.max_rounds)
        self.budget = ContextBudget(
            max_turns=config.context_max_turns, max_chars=config.context_max_chars
        )

    # -- session plumbing ---------------------------------------------------

    def _context_text(self, session_id: Optional[str], instruction: Message) -> str:
        if not session_id or not self.sessions.exists(session_id):
            return ""
        session = self.sessions.get(session_id)
        turns = retrieve_context(session, instruction, self.budget, modality_fn=self._modality_of)
        return "\n".join(t.text for t in turns)

    def _modality_of(self, artifact_id: str) -> Optional[str]:
        try:
            stored = self.store.stat(artifact_id)
        except OrionError:
            return None
        if stored.mime.startswith("image/"):
            return "image"
        if stored.mime.startswith("video/"):
            return "video"
        if stored.mime == "application/pdf":
            return "document"
        if stored.mime == "application/json":
            try:
                kind = json.loads(self.store.get(artifact_id)[0]).get("kind")
            except Exception:
                return None
            return {"image": "image", "document": "document", "video": "video"}.get(kind)
        return None

    # -- the pipeline -------------------------------------------------------

    def _run_tier(
        self,
        tier: str,
        instruction: str,
        file_ids: Sequence[str],
        context_text: str,
        final_schema: Optional[OutputSchema],
    ) -> tuple[Plan, ReflectionResult]:
        planner_backend = self.router.planners[tier]
        judge = self.router.judges[tier]
        the_plan = build_plan(instruction, file_ids, self.registry, planner_backend, context_text)
        execute_fn = lambda p, cached: execute(p, self.exec_policy, self.registry, cached=cached)
        result = reflect_loop(
            the_plan,
            execute_fn,
            policy=self.reflect_policy,
            final_schema=final_schema,
            judge=judge,
            instruction=instruction,
        )
        return the_plan, result

    def complete(
        self,
        model: ModelId,
        messages: Sequence[Message],
        final_schema: Optional[OutputSchema] = None,
        session_id: Optional[str] = None,
    ) -> CompletionOutcome:
        instruction_msg = next(
            (m for m in reversed(messages) if m.role.value == "user"), messages[-1]
        )
        instruction = instruction_msg.text_content()
        file_ids = [fid for m in messages for fid in m.file_ids()]
        context_text = self._context_text(session_id, instruction_msg)

        the_plan, result = self._run_tier(FAST, instruction, file_ids, context_text, final_schema)
        routing = self.router.route(
            model, {"reflection_failures": 0 if result.ok else len(result.verdicts)}
        )
        if routing["escalated"]:
            the_plan, result = self._run_tier(
                PRO, instruction, file_ids, context_text, final_schema
            )

        trace_id = self._persist_trace(the_plan, result, routing)

        if not result.ok:
            reason = result.verdicts[-1].reason if result.verdicts else "agent failed"
            if final_schema is not None:
                raise StructuredOutputFailure(message=f"agent could not produce a conformant answer: {reason}")
            raise AgentFailed(reason, trace_id=trace_id)

        artifact_ids = tuple(
            a.id for r in result.trace.outputs.values() for a in r.artifacts
        )

        if final_schema is not None:
            content = json.dumps(result.final_value, sort_keys=True)
            value, violations = validate_final(content, final_schema)
            if violations:
                raise StructuredOutputFailure(violations)
            outcome = CompletionOutcome(
                content=content,
                trace_id=trace_id,
                structured=value,
                artifact_ids=artifact_ids,
                session_id=session_id,
            )
        else:
            outcome = CompletionOutcome(
                content=render_answer(result.final_value),
                trace_id=trace_id,
                artifact_ids=artifact_ids,
                session_id=session_id,
            )

        if session_id:
            self.sessions.create(session_id)
            assistant = Message.text(Role.assistant, outcome.content)
            self.sessions.append_turn(
                session_id,
                instruction_msg,
                assistant,
                trace_ref=trace_id,
                artifact_ids=artifact_ids or tuple(file_ids),
            )
        return outcome

    def _persist_trace(self, the_plan: Plan, result: ReflectionResult, routing: dict) -> str:
        trace_id = "trace_" + uuid.uuid4().hex[:16]
        doc = {
            "trace_id": trace_id,
            "plan": the_plan.to_json(),
            "routing": routing,
        }
        doc.update(result.trace.to_json())
        doc["reflection"] = [v.to_json() for v in result.verdicts]
        (self.traces_dir / f"{trace_id}.json").write_text(json.dumps(doc, indent=1, sort_keys=True))
        return trace_id

    def load_trace(self, trace_id: str) -> Optional[dict]:
        path = self.traces_dir / f"{trace_id}.json"
        if not path.exists() or "/" in trace_id or "\\" in trace_id:
            return None
        return json.loads(path.read_text())
