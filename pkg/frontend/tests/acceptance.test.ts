// Console acceptance: the bay-area flow against a seeded engine server.
//
// Spawns the real Python service on a scratch port, drives it through the
// console's own client/store/render modules, and checks: the rendered DAG's
// node set equals the plan JSON's nodes; the prompt surfaces within one
// stream poll; the schema-typed answer transitions the node to done; the
// final table renders the oracle's row count.

import { ChildProcess, spawn } from "node:child_process";
import { fileURLToPath } from "node:url";
import path from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { renderDag, renderResultTable } from "../src/render.js";
import { StreamClient } from "../src/stream.js";
import { buildAnswer, fieldsFromSchema } from "../src/forms.js";
import { ConsoleStore } from "../src/store.js";
import type { PlanJson, PromptPayload, StreamMessage } from "../src/types.js";

import flow from "./fixtures/bay_area_flow.json";

const REPO_ROOT = path.resolve(path.dirname(fileURLToPath(import.meta.url)), "..", "..");
const PORT = 8498;
const BASE = `http://127.0.0.1:${PORT}`;

let server: ChildProcess | null = null;

async function serverReady(timeoutMs = 20000): Promise<boolean> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      const response = await fetch(`${BASE}/registry/operators`);
      if (response.ok) {
        return true;
      }
    } catch {
      // not up yet
    }
    await new Promise((resolve) => setTimeout(resolve, 250));
  }
  return false;
}

beforeAll(async () => {
  server = spawn(
    "python3",
    ["-m", "dataplan.cli", "serve", "--config", "fixtures/config.json", "--port", String(PORT)],
    { cwd: REPO_ROOT, stdio: "ignore" },
  );
  const ready = await serverReady();
  if (!ready) {
    throw new Error("seeded engine server did not come up");
  }
});

afterAll(() => {
  server?.kill();
});

describe("console against the seeded server", () => {
  it("runs the bay-area flow end to end", async () => {
    const api = new ApiClient(BASE);
    const store = new ConsoleStore();

    const session = await api.createSession();
    store.setSession(session.session_id);
    store.startQuery(flow.question);

    const submitted = await api.submitQuery(session.session_id, flow.question);
    expect(submitted.status).toBe("suspended");

    const planned = await api.getPlan(submitted.plan_id);
    store.setPlan(submitted.plan_id, planned.plan as PlanJson);

    // DAG node set equals the plan JSON's nodes.
    const svg = renderDag(store.state);
    const renderedIds = [...svg.querySelectorAll("g[data-node-id]")]
      .map((g) => (g as SVGGElement).dataset.nodeId)
      .sort();
    expect(renderedIds).toEqual(Object.keys(planned.plan.nodes).sort());
    const operatorIds = Object.values(planned.plan.nodes).map((n) => n.operator_id).sort();
    expect(operatorIds).toEqual(["in_filter", "join", "nl2llm", "nl2sql", "nl2u"]);

    // The prompt appears within one stream poll.
    const stream = new StreamClient(api, session.session_id, (m) => store.applyMessages(m), 2);
    await stream.pollOnce();
    expect(store.state.pendingPrompts).toHaveLength(1);
    const prompt = store.state.pendingPrompts[0];
    const suspendedNode = prompt.nodeId!;
    expect(store.state.nodeStatuses[suspendedNode]).toBe("suspended");

    // Schema-typed answer: integer input, coerced client-side, then posted.
    const fields = fieldsFromSchema(prompt.schema as Record<string, never>);
    expect(fields.find((f) => f.name === "min_salary")?.inputType).toBe("number");
    const answer = buildAnswer(fields, { min_salary: "150000" });
    expect(answer.ok).toBe(true);
    const resumed = await api.postAnswer(session.session_id, prompt.promptId, answer.answer);
    expect(resumed.status).toBe("done");

    // The suspended node transitions to done on the next poll, and the
    // pending prompt disappears.
    await stream.pollOnce();
    expect(store.state.nodeStatuses[suspendedNode]).toBe("done");
    expect(store.state.pendingPrompts).toHaveLength(0);
    expect(store.state.planStatus).toBe("done");

    // Final table renders with the oracle's row count.
    const settled = await api.getPlan(submitted.plan_id);
    store.setFinal(settled.record);
    const table = renderResultTable(store.state.finalRows!);
    expect(table.querySelectorAll("tbody tr")).toHaveLength(flow.oracle_rows.length);
  });

  it("renders an infeasible objective as a 422 error", async () => {
    const api = new ApiClient(BASE);
    const store = new ConsoleStore();
    const session = await api.createSession();
    store.setSession(session.session_id);
    try {
      await api.submitQuery(session.session_id, flow.question, { quality_floor: 0.99 });
      expect.unreachable("expected an infeasible-objective error");
    } catch (error: any) {
      expect(error.status).toBe(422);
      expect(error.code).toBe("infeasible");
      store.setError({ code: error.code, message: error.message });
    }
    expect(store.state.error?.code).toBe("infeasible");
  });

  it("browses the registry as a tree with live search results", async () => {
    const api = new ApiClient(BASE);
    const result = await api.searchRegistry("jobs", undefined, 10);
    expect(result.hits[0].path).toEqual(["jobs_db", "main", "jobs"]);
    const attributeLevel = await api.searchRegistry("jobs", "attribute", 10);
    expect(attributeLevel.hits.every((h) => h.level === "attribute")).toBe(true);
  });

  it("replayed stream polls mirror the committed fixture shape", async () => {
    // The committed fixture was captured from this same engine configuration;
    // its message kinds in order are a stable contract for the store.
    const kinds = (flow.phase1_messages as StreamMessage[]).map((m) => m.kind);
    expect(kinds[0]).toBe("status");
    expect(kinds).toContain("prompt");
    const prompt = (flow.phase1_messages as StreamMessage[]).find((m) => m.kind === "prompt")!;
    const payload = prompt.payload as PromptPayload;
    expect(payload.output_schema).toEqual({ min_salary: { type: "integer", required: true } });
  });
});
