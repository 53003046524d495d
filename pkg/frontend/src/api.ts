// Typed client for the agent service. Pure API consumer: everything here maps
// 1:1 onto the documented HTTP endpoints, no business logic.

export interface TextPart {
  type: "text";
  text: string;
}

export interface FilePart {
  type: "input_file";
  file_id: string;
}

export type ContentPart = TextPart | FilePart;

export interface ChatMessage {
  role: "user" | "assistant" | "system";
  content: string | ContentPart[];
}

export interface CompletionRequest {
  model: string;
  messages: ChatMessage[];
  stream?: boolean;
  session_id?: string;
  response_format?: { type: "json_schema"; schema: unknown };
}

export interface Completion {
  id: string;
  object: string;
  created: number;
  model: string;
  trace_id: string;
  choices: Array<{
    index: number;
    message: { role: string; content: string };
    finish_reason: string;
  }>;
  usage: { prompt_tokens: number; completion_tokens: number; total_tokens: number };
}

export interface StreamChunk {
  id: string;
  object: string;
  created: number;
  model: string;
  choices: Array<{
    index: number;
    delta: { role?: string; content?: string };
    finish_reason: string | null;
  }>;
}

export interface UploadedFile {
  id: string;
  filename: string;
  bytes: number;
  created_at: string;
}

// Server trace document, verbatim shape from GET /v1/traces/{id}.
export interface TraceStep {
  node_id: string;
  attempt: number;
  started_at: number;
  ended_at: number;
  result: { status: string; output?: unknown; error_message?: string };
}

export interface TracePlanNode {
  id: string;
  tool: string;
  inputs: Record<string, unknown>;
}

export interface TraceVerdict {
  action: string;
  reason: string;
  score?: number;
  node_id?: string;
}

export interface TraceDoc {
  trace_id: string;
  status: string;
  plan: { nodes: TracePlanNode[]; final: unknown; rationale?: string };
  steps: TraceStep[];
  outputs: Record<string, { status: string; output?: unknown }>;
  reflection: TraceVerdict[];
  routing: { mode: string; tier: string; escalated: boolean; fallback: boolean };
  failed_node?: string;
}

export interface ApiErrorBody {
  error: { message: string; type: string; code: string };
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public body: ApiErrorBody | null,
    message: string,
  ) {
    super(message);
  }
}

export interface StreamHandlers {
  /** Called once per SSE event as soon as it is parsed, before any rendering. */
  onEvent?: (chunk: StreamChunk, receivedAt: number) => void;
  onRole?: (role: string) => void;
  onDelta: (text: string) => void;
  onDone?: (fullContent: string) => void;
}

async function throwApiError(resp: Response): Promise<never> {
  let body: ApiErrorBody | null = null;
  let message = `${resp.status} ${resp.statusText}`;
  try {
    body = (await resp.json()) as ApiErrorBody;
    if (body?.error?.message) message = body.error.message;
  } catch {
    // non-JSON error body; keep the status line
  }
  throw new ApiError(resp.status, body, message);
}

/** Split an SSE byte stream into `data:` payload strings, ending at [DONE]. */
export async function* sseEvents(body: ReadableStream<Uint8Array>): AsyncGenerator<string> {
  const reader = body.getReader();
  const decoder = new TextDecoder();
  let buffer = "";
  try {
    while (true) {
      const { value, done } = await reader.read();
      if (done) break;
      buffer += decoder.decode(value, { stream: true });
      let at: number;
      while ((at = buffer.indexOf("\n\n")) >= 0) {
        const raw = buffer.slice(0, at);
        buffer = buffer.slice(at + 2);
        if (!raw.startsWith("data: ")) continue;
        const data = raw.slice("data: ".length);
        if (data === "[DONE]") return;
        yield data;
      }
    }
  } finally {
    reader.releaseLock();
  }
}

export class OrionClient {
  constructor(
    private baseUrl: string = "",
    private apiKey: string | null = null,
  ) {}

  private headers(extra: Record<string, string> = {}): Record<string, string> {
    return this.apiKey ? { ...extra, Authorization: `Bearer ${this.apiKey}` } : extra;
  }

  async uploadFile(name: string, content: Blob | Uint8Array, mime: string): Promise<UploadedFile> {
    const blob = content instanceof Blob ? content : new Blob([content as BlobPart], { type: mime });
    const form = new FormData();
    form.append("file", blob, name);
    const resp = await fetch(`${this.baseUrl}/v1/files`, {
      method: "POST",
      headers: this.headers(),
      body: form,
    });
    if (!resp.ok) await throwApiError(resp);
    return (await resp.json()) as UploadedFile;
  }

  async complete(request: CompletionRequest): Promise<Completion> {
    const resp = await fetch(`${this.baseUrl}/v1/agent/completions`, {
      method: "POST",
      headers: this.headers({ "Content-Type": "application/json" }),
      body: JSON.stringify({ ...request, stream: false }),
    });
    if (!resp.ok) await throwApiError(resp);
    return (await resp.json()) as Completion;
  }

  /** Stream a completion, dispatching each delta to the handlers as it arrives. */
  async streamCompletion(request: CompletionRequest, handlers: StreamHandlers): Promise<string> {
    const resp = await fetch(`${this.baseUrl}/v1/agent/completions`, {
      method: "POST",
      headers: this.headers({ "Content-Type": "application/json" }),
      body: JSON.stringify({ ...request, stream: true }),
    });
    if (!resp.ok) await throwApiError(resp);
    if (!resp.body) throw new ApiError(resp.status, null, "response has no body to stream");

    let content = "";
    for await (const data of sseEvents(resp.body)) {
      const chunk = JSON.parse(data) as StreamChunk;
      handlers.onEvent?.(chunk, performance.now());
      const delta = chunk.choices[0]?.delta ?? {};
      if (delta.role) handlers.onRole?.(delta.role);
      if (delta.content) {
        content += delta.content;
        handlers.onDelta(delta.content);
      }
    }
    handlers.onDone?.(content);
    return content;
  }

  async fetchTrace(traceId: string): Promise<TraceDoc> {
    const resp = await fetch(`${this.baseUrl}/v1/traces/${traceId}`, {
      headers: this.headers(),
    });
    if (!resp.ok) await throwApiError(resp);
    return (await resp.json()) as TraceDoc;
  }

  /**
   * Poll a trace while a run is active (the service has no push channel).
   * Returns a stop function; polling also stops once the trace turns terminal.
   */
  pollTrace(
    traceId: string,
    onUpdate: (trace: TraceDoc) => void,
    intervalMs = 500,
  ): () => void {
    let stopped = false;
    const tick = async () => {
      if (stopped) return;
      try {
        const trace = await this.fetchTrace(traceId);
        if (stopped) return;
        onUpdate(trace);
        if (trace.status !== "running") return; // persisted traces are terminal
      } catch {
        // not persisted yet; keep polling
      }
      if (!stopped) setTimeout(tick, intervalMs);
    };
    setTimeout(tick, intervalMs);
    return () => {
      stopped = true;
    };
  }
}
