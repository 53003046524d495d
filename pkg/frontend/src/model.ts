// View models derived from server data. Strict rule: nothing in here invents
// state — every rendered status traces back to a field in the server JSON.

import type { TraceDoc, TraceStep, TraceVerdict } from "./api.js";

export type NodeStatus = "pending" | "running" | "ok" | "error" | "retried";

export interface TraceNodeView {
  id: string;
  tool: string;
  status: NodeStatus;
  attempts: number;
  dependsOn: string[];
  verdicts: TraceVerdict[]; // reflection verdicts addressed at this node
}

export interface TraceView {
  traceId: string;
  status: string;
  tier: string;
  escalated: boolean;
  nodes: TraceNodeView[];
  rounds: TraceVerdict[]; // full reflection history, in order
}

/** Pull upstream node ids out of a plan node's input bindings ({ref:{node}}). */
function refsOf(inputs: Record<string, unknown>): string[] {
  const deps: string[] = [];
  for (const value of Object.values(inputs)) {
    if (value && typeof value === "object" && "ref" in value) {
      const ref = (value as { ref: { node?: string } }).ref;
      if (ref?.node && !deps.includes(ref.node)) deps.push(ref.node);
    }
  }
  return deps;
}

function statusOf(steps: TraceStep[]): NodeStatus {
  if (steps.length === 0) return "pending";
  const last = steps[steps.length - 1]!;
  if (last.result.status === "ok") {
    return steps.length > 1 ? "retried" : "ok";
  }
  return "error";
}

export function buildTraceView(trace: TraceDoc): TraceView {
  const stepsByNode = new Map<string, TraceStep[]>();
  for (const step of trace.steps) {
    const bucket = stepsByNode.get(step.node_id) ?? [];
    bucket.push(step);
    stepsByNode.set(step.node_id, bucket);
  }
  const nodes = trace.plan.nodes.map((node) => {
    const steps = stepsByNode.get(node.id) ?? [];
    return {
      id: node.id,
      tool: node.tool,
      status: statusOf(steps),
      attempts: steps.length,
      dependsOn: refsOf(node.inputs),
      verdicts: trace.reflection.filter((v) => v.node_id === node.id),
    };
  });
  return {
    traceId: trace.trace_id,
    status: trace.status,
    tier: trace.routing.tier,
    escalated: trace.routing.escalated,
    nodes,
    rounds: trace.reflection,
  };
}

/** One row per node, the form the trace panel paints. */
export function renderTraceRows(view: TraceView): string[] {
  return view.nodes.map((n) => {
    const deps = n.dependsOn.length ? ` after ${n.dependsOn.join(",")}` : "";
    const badges = n.verdicts.map((v) => ` [${v.action}]`).join("");
    return `${n.id} ${n.tool} ${n.status}${deps}${badges}`;
  });
}

// ---- structured mode -------------------------------------------------------

export type SchemaParse =
  | { ok: true; responseFormat: { type: "json_schema"; schema: unknown } }
  | { ok: false; error: string };

/**
 * Validate the schema editor's text locally. A parse failure here means no
 * request is sent at all; the editor shows the error inline.
 */
export function parseSchemaText(text: string): SchemaParse {
  let schema: unknown;
  try {
    schema = JSON.parse(text);
  } catch (e) {
    return { ok: false, error: `schema is not valid JSON: ${(e as Error).message}` };
  }
  if (typeof schema !== "object" || schema === null || Array.isArray(schema)) {
    return { ok: false, error: "schema must be a JSON object" };
  }
  if ((schema as { type?: unknown }).type !== "object") {
    return { ok: false, error: 'schema must declare "type": "object"' };
  }
  return { ok: true, responseFormat: { type: "json_schema", schema } };
}

/** Indented tree lines for a validated structured body. */
export function formatJsonTree(value: unknown, indent = 0): string[] {
  const pad = "  ".repeat(indent);
  if (Array.isArray(value)) {
    if (value.length === 0) return [`${pad}[]`];
    return value.flatMap((item, i) => {
      const sub = formatJsonTree(item, indent + 1);
      return [`${pad}- [${i}]`, ...sub];
    });
  }
  if (value && typeof value === "object") {
    const entries = Object.entries(value as Record<string, unknown>);
    if (entries.length === 0) return [`${pad}{}`];
    return entries.flatMap(([key, val]) => {
      if (val && typeof val === "object") {
        return [`${pad}${key}:`, ...formatJsonTree(val, indent + 1)];
      }
      return [`${pad}${key}: ${JSON.stringify(val)}`];
    });
  }
  return [`${pad}${JSON.stringify(value)}`];
}

// ---- session mirror --------------------------------------------------------

export interface UiTurn {
  user: string;
  assistant: string;
  traceId: string | null;
}

/**
 * Client-side mirror of the server session: the id we pass on every request
 * plus the turns observed going through this tab. Never edited after append.
 */
export class UiSession {
  readonly turns: UiTurn[] = [];

  constructor(readonly id: string | null = null) {}

  record(user: string, assistant: string, traceId: string | null): void {
    this.turns.push({ user, assistant, traceId });
  }
}
