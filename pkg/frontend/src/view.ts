// Transcript state for the chat pane. DOM-free on purpose: main.ts binds this
// to elements, tests drive it directly against a live service.

export interface MessageView {
  role: "user" | "assistant";
  content: string;
  pending: boolean;
  traceId: string | null;
  error: string | null;
}

export class Transcript {
  readonly messages: MessageView[] = [];
  private listeners: Array<() => void> = [];

  onChange(listener: () => void): void {
    this.listeners.push(listener);
  }

  private notify(): void {
    for (const l of this.listeners) l();
  }

  addUser(content: string): void {
    this.messages.push({ role: "user", content, pending: false, traceId: null, error: null });
    this.notify();
  }

  /** Open an assistant message that deltas will stream into. */
  beginAssistant(): MessageView {
    const message: MessageView = {
      role: "assistant",
      content: "",
      pending: true,
      traceId: null,
      error: null,
    };
    this.messages.push(message);
    this.notify();
    return message;
  }

  appendDelta(message: MessageView, delta: string): void {
    message.content += delta;
    this.notify();
  }

  finish(message: MessageView, traceId: string | null): void {
    message.pending = false;
    message.traceId = traceId;
    this.notify();
  }

  fail(message: MessageView, error: string): void {
    message.pending = false;
    message.error = error;
    this.notify();
  }

  /** The rendered text of the newest assistant message (what the pane shows). */
  lastAssistantText(): string {
    for (let i = this.messages.length - 1; i >= 0; i--) {
      const m = this.messages[i]!;
      if (m.role === "assistant") return m.content;
    }
    return "";
  }
}
