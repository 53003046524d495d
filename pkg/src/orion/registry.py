"""The standardized tool contract: typed descriptors, lookup, validated invocation.

Input violations raise before the backend runs; output violations and backend
failures (including timeouts) become status=error ToolResults so the
reflection loop can decide what to do with them.
"""
from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor, TimeoutError as FutureTimeout
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Mapping, Optional

from orion.errors import OrionError
from orion.model.types import ArtifactRef, OutputSchema
from orion.schema import validate_value, violation_report

DEFAULT_TIMEOUT_MS = 30_000


class Category(str, Enum):
    image = "image"
    document = "document"
    video = "video"
    mixed = "mixed"


class CostHint(str, Enum):
    cheap = "cheap"
    gpu = "gpu"
    remote = "remote"


class Tier(str, Enum):
    fast = "fast"
    pro = "pro"
    any = "any"


class DuplicateName(OrionError):
    pass


class SchemaShape(OrionError):
    pass


class UnknownTool(OrionError):
    pass


class InputSchemaViolation(OrionError):
    def __init__(self, tool: str, violations) -> None:
        self.tool = tool
        self.violations = list(violations)
        super().__init__(f"input for {tool!r} invalid: {violation_report(self.violations)}")


class ToolError(OrionError):
    """Raised by backends to report a domain failure; converted to status=error."""


@dataclass(frozen=True)
class ToolDescriptor:
    name: str
    category: Category
    description: str
    input_schema: OutputSchema
    output_schema: OutputSchema
    cost_hint: CostHint = CostHint.cheap
    tier: Tier = Tier.any
    timeout_ms: Optional[int] = None

    def to_json(self) -> dict:
        d = {
            "name": self.name,
            "category": self.category.value,
            "description": self.description,
            "input_schema": self.input_schema.to_json(),
            "output_schema": self.output_schema.to_json(),
            "cost_hint": self.cost_hint.value,
            "tier": self.tier.value,
        }
        if self.timeout_ms is not None:
            d["timeout_ms"] = self.timeout_ms
        return d


@dataclass(frozen=True)
class ToolResult:
    status: str  # ok | error
    output: Any = None
    artifacts: tuple[ArtifactRef, ...] = ()
    error_message: str = ""
    latency_ms: float = 0.0

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def to_json(self) -> dict:
        d: dict[str, Any] = {
            "status": self.status,
            "artifacts": [a.to_json() for a in self.artifacts],
            "latency_ms": self.latency_ms,
        }
        if self.status == "ok":
            d["output"] = self.output
        else:
            d["error_message"] = self.error_message
        return d


Backend = Callable[[Mapping[str, Any]], Any]


@dataclass
class _Entry:
    descriptor: ToolDescriptor
    backend: Backend


class ToolRegistry:
    """Name-keyed registry, frozen after startup by convention."""

    def __init__(self) -> None:
        self._entries: dict[str, _Entry] = {}
        self._timeout_pool = ThreadPoolExecutor(max_workers=32, thread_name_prefix="tool")

    def register(self, desc: ToolDescriptor, backend: Backend) -> None:
        if desc.name in self._entries:
            raise DuplicateName(f"tool {desc.name!r} already registered")
        if desc.input_schema.root.get("type") != "object":
            raise SchemaShape(f"tool {desc.name!r} input schema must be object-rooted")
        if desc.output_schema.root.get("type") != "object":
            raise SchemaShape(f"tool {desc.name!r} output schema must be object-rooted")
        self._entries[desc.name] = _Entry(descriptor=desc, backend=backend)

    def get(self, name: str) -> ToolDescriptor:
        entry = self._entries.get(name)
        if entry is None:
            raise UnknownTool(f"no tool named {name!r}")
        return entry.descriptor

    def has(self, name: str) -> bool:
        return name in self._entries

    def list(self, category: Optional[Category] = None) -> list[ToolDescriptor]:
        descs = [e.descriptor for e in self._entries.values()]
        if category is not None:
            descs = [d for d in descs if d.category is category]
        return sorted(descs, key=lambda d: d.name)

    def invoke(
        self, name: str, input: Mapping[str, Any], timeout_ms: Optional[int] = None
    ) -> ToolResult:
        """Validate input, run the backend under a timeout, validate output."""
        entry = self._entries.get(name)
        if entry is None:
            raise UnknownTool(f"no tool named {name!r}")
        violations = validate_value(input, entry.descriptor.input_schema)
        if violations:
            raise InputSchemaViolation(name, violations)

        budget_ms = (
            entry.descriptor.timeout_ms
            if entry.descriptor.timeout_ms is not None
            else (timeout_ms if timeout_ms is not None else DEFAULT_TIMEOUT_MS)
        )
        started = time.perf_counter()
        future = self._timeout_pool.submit(entry.backend, input)
        try:
            raw = future.result(timeout=budget_ms / 1000.0)
        except FutureTimeout:
            future.cancel()
            latency = (time.perf_counter() - started) * 1000.0
            return ToolResult(
                status="error",
                error_message=f"timeout after {budget_ms}ms",
                latency_ms=latency,
            )
        except ToolError as exc:
            latency = (time.perf_counter() - started) * 1000.0
            return ToolResult(status="error", error_message=str(exc), latency_ms=latency)
        except Exception as exc:  # backend bug: contained, surfaced for reflection
            latency = (time.perf_counter() - started) * 1000.0
            return ToolResult(
                status="error",
                error_message=f"{type(exc).__name__}: {exc}",
                latency_ms=latency,
            )
        latency = (time.perf_counter() - started) * 1000.0

        output, artifacts = raw if isinstance(raw, tuple) else (raw, ())
        out_violations = validate_value(output, entry.descriptor.output_schema)
        if out_violations:
            return ToolResult(
                status="error",
                error_message=f"output schema violation: {violation_report(out_violations)}",
                latency_ms=latency,
            )
        return ToolResult(
            status="ok", output=output, artifacts=tuple(artifacts), latency_ms=latency
        )


def load_catalog(
    path: str | Path, binder: Callable[[str], Backend], registry: Optional[ToolRegistry] = None
) -> ToolRegistry:
    """Build a registry from a JSON catalog; ``binder`` resolves backend bindings
    like ``fixture:caption`` or ``stub:generate`` to callables."""
    registry = registry or ToolRegistry()
    doc = json.loads(Path(path).read_text())
    for tool in doc["tools"]:
        desc = ToolDescriptor(
            name=tool["name"],
            category=Category(tool["category"]),
            description=tool.get("description", ""),
            input_schema=OutputSchema(tool["input_schema"]),
            output_schema=OutputSchema(tool["output_schema"]),
            cost_hint=CostHint(tool.get("cost_hint", "cheap")),
            tier=Tier(tool.get("tier", "any")),
            timeout_ms=tool.get("timeout_ms"),
        )
        registry.register(desc, binder(tool["backend"]))
    return registry
