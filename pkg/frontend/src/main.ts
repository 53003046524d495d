// DOM glue. All state lives in Transcript / TraceView; this file only paints.

import { OrionClient } from "./api.js";
import { ChatController, describe } from "./chat.js";
import type { Attachment } from "./chat.js";
import { buildTraceView, formatJsonTree, parseSchemaText, renderTraceRows } from "./model.js";
import { Transcript } from "./view.js";

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
};

const client = new OrionClient("", null);
const transcript = new Transcript();
const controller = new ChatController(client, transcript);

const messagesEl = $("messages");
const composerEl = $<HTMLFormElement>("composer");
const inputEl = $<HTMLTextAreaElement>("input");
const fileEl = $<HTMLInputElement>("attachment");
const captureEl = $<HTMLInputElement>("capture-trace");
const structuredEl = $<HTMLInputElement>("structured-toggle");
const schemaEl = $<HTMLTextAreaElement>("schema-editor");
const schemaErrorEl = $("schema-error");
const tracePanelEl = $("trace-panel");
const toastEl = $("toast");

function toast(text: string): void {
  toastEl.textContent = text;
  toastEl.classList.add("visible");
  setTimeout(() => toastEl.classList.remove("visible"), 6000);
}

transcript.onChange(() => {
  messagesEl.replaceChildren(
    ...transcript.messages.map((m) => {
      const div = document.createElement("div");
      div.className = `message ${m.role}${m.pending ? " pending" : ""}`;
      if (m.error) {
        div.classList.add("error");
        div.textContent = m.error;
      } else if (structuredEl.checked && m.role === "assistant" && !m.pending && m.content) {
        try {
          const pre = document.createElement("pre");
          pre.textContent = formatJsonTree(JSON.parse(m.content)).join("\n");
          div.append(pre);
        } catch {
          div.textContent = m.content;
        }
      } else {
        div.textContent = m.content;
      }
      return div;
    }),
  );
  messagesEl.scrollTop = messagesEl.scrollHeight;
});

function paintTrace(traceId: string): void {
  client
    .fetchTrace(traceId)
    .then((trace) => {
      const view = buildTraceView(trace);
      const rows = renderTraceRows(view);
      const header = `${view.traceId} — ${view.status} (${view.tier}${view.escalated ? ", escalated" : ""})`;
      const rounds = view.rounds.map(
        (v, i) => `round ${i + 1}: ${v.action}${v.reason ? ` — ${v.reason}` : ""}`,
      );
      tracePanelEl.textContent = [header, "", ...rows, "", ...rounds].join("\n");
    })
    .catch((e) => toast(describe(e)));
}

structuredEl.addEventListener("change", () => {
  schemaEl.parentElement!.hidden = !structuredEl.checked;
});

schemaEl.addEventListener("input", () => {
  if (!structuredEl.checked || !schemaEl.value.trim()) {
    schemaErrorEl.textContent = "";
    return;
  }
  const parsed = parseSchemaText(schemaEl.value);
  schemaErrorEl.textContent = parsed.ok ? "" : parsed.error;
});

composerEl.addEventListener("submit", (event) => {
  event.preventDefault();
  void (async () => {
    const text = inputEl.value.trim();
    if (!text) return;
    const attachments: Attachment[] = [];
    for (const file of fileEl.files ?? []) {
      attachments.push({ name: file.name, content: file, mime: file.type || "application/json" });
    }
    const schema =
      structuredEl.checked && schemaEl.value.trim() ? parseSchemaText(schemaEl.value) : null;
    if (schema && !schema.ok) {
      schemaErrorEl.textContent = schema.error;
      return; // local error: nothing leaves the page
    }
    inputEl.value = "";
    fileEl.value = "";
    try {
      const result = await controller.send(text, {
        attachments,
        schema,
        captureTrace: captureEl.checked,
      });
      if (result.traceId) paintTrace(result.traceId);
    } catch (e) {
      toast(describe(e));
    }
  })();
});
