// Integration against the real service: spawn it, talk to it over HTTP the
// same way the page does. Requires the Python package to be installed (the
// `orion` entry point; override with ORION_BIN).

import { type ChildProcess, spawn } from "node:child_process";
import { mkdtempSync, readFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { fileURLToPath } from "node:url";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { OrionClient } from "../src/api.js";
import { ChatController } from "../src/chat.js";
import { buildTraceView } from "../src/model.js";
import { Transcript } from "../src/view.js";

const PORT = 8310 + (process.pid % 200);
const BASE = `http://127.0.0.1:${PORT}`;
const HERE = fileURLToPath(new URL(".", import.meta.url));
const STREET = join(HERE, "..", "..", "src", "orion", "data", "fixtures", "street.scene.json");

let service: ChildProcess;

beforeAll(async () => {
  service = spawn(process.env.ORION_BIN ?? "orion", ["serve", "--port", String(PORT)], {
    env: {
      ...process.env,
      ORION_DATA_DIR: mkdtempSync(join(tmpdir(), "orion-ui-test-")),
      ORION_SIGNING_KEY: "ui-test-secret",
      ORION_API_KEYS: "",
    },
    stdio: ["ignore", "pipe", "pipe"],
  });
  const stderr: Buffer[] = [];
  service.stderr?.on("data", (d: Buffer) => stderr.push(d));
  const deadline = Date.now() + 30_000;
  while (Date.now() < deadline) {
    try {
      const resp = await fetch(`${BASE}/healthz`);
      if (resp.ok) return;
    } catch {
      // not up yet
    }
    if (service.exitCode !== null) break;
    await new Promise((r) => setTimeout(r, 200));
  }
  throw new Error(`service did not come up: ${Buffer.concat(stderr).toString()}`);
}, 60_000);

afterAll(async () => {
  if (!service) return;
  service.kill("SIGTERM");
  await new Promise((resolve) => {
    service.once("exit", resolve);
    setTimeout(resolve, 5_000);
  });
});

function fresh() {
  const client = new OrionClient(BASE);
  const transcript = new Transcript();
  return { client, controller: new ChatController(client, transcript), transcript };
}

const streetAttachment = () => ({
  name: "street.scene.json",
  content: new Uint8Array(readFileSync(STREET)),
  mime: "application/json",
});

const CANNED_PROMPTS = [
  "What is in this image?",
  "Crop into the clock in the image and extract the time shown.",
  "Where is the person in this image?",
  "Count the car in this image",
  "Read the text in the image",
];

describe("streamed chat against the live service", () => {
  it("renders the first delta within 200 ms of the first server chunk and mirrors the final content", async () => {
    for (const prompt of CANNED_PROMPTS) {
      const { client, controller, transcript } = fresh();

      // ground truth from the batch endpoint for the identical request
      const fileId = (await client.uploadFile("street.scene.json", streetAttachment().content, "application/json")).id;
      const batch = await client.complete({
        model: "orion/agent",
        messages: [
          {
            role: "user",
            content: [
              { type: "text", text: prompt },
              { type: "input_file", file_id: fileId },
            ],
          },
        ],
      });
      const finalContent = batch.choices[0]!.message.content;

      const result = await controller.send(prompt, { attachments: [streetAttachment()] });

      expect(result.firstChunkAt).not.toBeNull();
      expect(result.firstRenderAt).not.toBeNull();
      expect(result.firstRenderAt! - result.firstChunkAt!).toBeLessThan(200);

      expect(result.content).toBe(finalContent);
      expect(transcript.lastAssistantText()).toBe(finalContent);
      const last = transcript.messages[transcript.messages.length - 1]!;
      expect(last.pending).toBe(false);
      expect(last.error).toBeNull();
    }
  }, 30_000);

  it("streams the caption token-by-token rather than as one blob", async () => {
    const { controller } = fresh();
    const renders: string[] = [];
    controller.transcript.onChange(() => renders.push(controller.transcript.lastAssistantText()));
    const result = await controller.send("What is in this image?", {
      attachments: [streetAttachment()],
    });
    const growing = renders.filter((r, i) => r && r !== renders[i - 1]);
    expect(growing.length).toBeGreaterThan(1); // 16-char deltas, so several paints
    expect(growing[growing.length - 1]).toBe(result.content);
  });
});

describe("trace panel against the live service", () => {
  it("renders exactly the clock workflow's three nodes with matching terminal statuses", async () => {
    const { client, controller } = fresh();
    const result = await controller.send(
      "Crop into the clock in the image and extract the time shown.",
      { attachments: [streetAttachment()], captureTrace: true },
    );
    expect(result.content).toContain("10:09");
    expect(result.traceId).not.toBeNull();

    const trace = await client.fetchTrace(result.traceId!);
    const view = buildTraceView(trace);

    // exactly the server's node set, nothing invented
    expect(view.nodes).toHaveLength(3);
    expect(view.nodes.map((n) => n.id)).toEqual(trace.plan.nodes.map((n) => n.id));
    expect(view.nodes.map((n) => n.tool)).toEqual(["detect", "crop", "ocr_image"]);

    // every rendered status is terminal and equals the server's step outcome
    for (const node of view.nodes) {
      expect(["ok", "error", "retried"]).toContain(node.status);
      const serverSteps = trace.steps.filter((s) => s.node_id === node.id);
      const lastStatus = serverSteps[serverSteps.length - 1]!.result.status;
      expect(node.status === "error" ? "error" : "ok").toBe(lastStatus);
      expect(node.attempts).toBe(serverSteps.length);
    }
    expect(view.status).toBe("succeeded");
  });

  it("structured mode round-trips a schema and renders the validated body", async () => {
    const { controller } = fresh();
    const schemaText =
      '{"type": "object", "required": ["caption"], "properties": {"caption": {"type": "string"}}}';
    const { parseSchemaText, formatJsonTree } = await import("../src/model.js");
    const schema = parseSchemaText(schemaText);
    expect(schema.ok).toBe(true);
    const result = await controller.send("What is in this image?", {
      attachments: [streetAttachment()],
      schema,
    });
    const body = JSON.parse(result.content) as { caption: string };
    expect(typeof body.caption).toBe("string");
    expect(formatJsonTree(body).join("\n")).toContain("caption:");
  });
});
