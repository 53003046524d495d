// send_message orchestration: upload attachments, stream the completion,
// feed deltas straight into the transcript as they come off the wire.

import { ApiError, OrionClient } from "./api.js";
import type { CompletionRequest, StreamChunk } from "./api.js";
import { UiSession } from "./model.js";
import type { SchemaParse } from "./model.js";
import { Transcript } from "./view.js";
import type { MessageView } from "./view.js";

export interface Attachment {
  name: string;
  content: Blob | Uint8Array;
  mime: string;
}

export interface SendResult {
  content: string;
  traceId: string | null;
  /** performance.now() when the first SSE event was parsed off the socket. */
  firstChunkAt: number | null;
  /** performance.now() right after the first content delta hit the transcript. */
  firstRenderAt: number | null;
}

export interface SendOptions {
  attachments?: Attachment[];
  schema?: SchemaParse | null;
  /**
   * Stream chunks carry no trace id, so trace inspection needs the batch
   * endpoint: with captureTrace the whole answer arrives as one delta and the
   * result carries the trace id for the trace panel.
   */
  captureTrace?: boolean;
}

export class ChatController {
  constructor(
    private client: OrionClient,
    readonly transcript: Transcript,
    readonly session: UiSession = new UiSession(),
    private model = "orion/agent",
  ) {}

  async send(text: string, options: SendOptions = {}): Promise<SendResult> {
    const { attachments = [], schema = null, captureTrace = false } = options;
    if (schema && !schema.ok) {
      // local editor error: surface it, never send the request
      throw new Error(schema.error);
    }
    this.transcript.addUser(text);
    const message = this.transcript.beginAssistant();

    let fileIds: string[];
    try {
      fileIds = await Promise.all(
        attachments.map(async (a) => (await this.client.uploadFile(a.name, a.content, a.mime)).id),
      );
    } catch (e) {
      this.transcript.fail(message, describe(e));
      throw e;
    }

    const request: CompletionRequest = {
      model: this.model,
      messages: [
        {
          role: "user",
          content: [
            { type: "text", text },
            ...fileIds.map((id) => ({ type: "input_file" as const, file_id: id })),
          ],
        },
      ],
    };
    if (this.session.id) request.session_id = this.session.id;
    if (schema) request.response_format = schema.responseFormat;

    try {
      if (captureTrace) {
        const completion = await this.client.complete(request);
        const content = completion.choices[0]?.message.content ?? "";
        this.transcript.appendDelta(message, content);
        this.transcript.finish(message, completion.trace_id);
        this.session.record(text, content, completion.trace_id);
        return { content, traceId: completion.trace_id, firstChunkAt: null, firstRenderAt: null };
      }

      let firstChunkAt: number | null = null;
      let firstRenderAt: number | null = null;
      const content = await this.client.streamCompletion(request, {
        onEvent: (_chunk: StreamChunk, receivedAt: number) => {
          if (firstChunkAt === null) firstChunkAt = receivedAt;
        },
        onDelta: (delta) => {
          this.transcript.appendDelta(message, delta);
          if (firstRenderAt === null) firstRenderAt = performance.now();
        },
      });
      this.transcript.finish(message, null);
      this.session.record(text, content, null);
      return { content, traceId: null, firstChunkAt, firstRenderAt };
    } catch (e) {
      this.transcript.fail(message, describe(e));
      throw e;
    }
  }
}

export function describe(e: unknown): string {
  if (e instanceof ApiError) {
    const code = e.body?.error?.code;
    return code ? `${e.message} (${code})` : e.message;
  }
  return e instanceof Error ? e.message : String(e);
}
