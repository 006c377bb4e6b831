// Single view-model store. All state derives from service API responses and
// stream messages; nothing here re-implements engine behavior.

import type {
  ApiErrorBody,
  ExecutionRecordJson,
  NodeStatus,
  PlanJson,
  PromptPayload,
  RegistryHit,
  Row,
  StreamMessage,
} from "./types.js";

export interface PendingPrompt {
  promptId: string;
  question: string;
  schema: Record<string, unknown>;
  nodeId?: string;
}

export interface ConsoleState {
  sessionId: string | null;
  question: string;
  planId: string | null;
  plan: PlanJson | null;
  nodeStatuses: Record<string, NodeStatus>;
  planStatus: string;
  timeline: StreamMessage[];
  pendingPrompts: PendingPrompt[];
  finalRows: Row[] | null;
  error: ApiErrorBody | null;
  registryHits: RegistryHit[];
}

export type Listener = (state: ConsoleState) => void;

export class ConsoleStore {
  readonly state: ConsoleState = {
    sessionId: null,
    question: "",
    planId: null,
    plan: null,
    nodeStatuses: {},
    planStatus: "idle",
    timeline: [],
    pendingPrompts: [],
    finalRows: null,
    error: null,
    registryHits: [],
  };

  private listeners: Listener[] = [];

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private changed(): void {
    for (const listener of this.listeners) {
      listener(this.state);
    }
  }

  setSession(sessionId: string): void {
    this.state.sessionId = sessionId;
    this.changed();
  }

  startQuery(question: string): void {
    this.state.question = question;
    this.state.planId = null;
    this.state.plan = null;
    this.state.nodeStatuses = {};
    this.state.planStatus = "planning";
    this.state.timeline = [];
    this.state.pendingPrompts = [];
    this.state.finalRows = null;
    this.state.error = null;
    this.changed();
  }

  setPlan(planId: string, plan: PlanJson): void {
    this.state.planId = planId;
    this.state.plan = plan;
    for (const [nodeId, node] of Object.entries(plan.nodes)) {
      // Seed from the plan snapshot; stream status messages take over from here.
      if (!(nodeId in this.state.nodeStatuses)) {
        this.state.nodeStatuses[nodeId] = node.status;
      }
    }
    this.changed();
  }

  setError(error: ApiErrorBody): void {
    this.state.error = error;
    this.state.planStatus = "error";
    this.changed();
  }

  setFinal(record: ExecutionRecordJson): void {
    if (record.final && record.final.tables.length > 0) {
      this.state.finalRows = record.final.tables[0].rows;
    }
    this.changed();
  }

  setRegistryHits(hits: RegistryHit[]): void {
    this.state.registryHits = hits;
    this.changed();
  }

  applyMessages(messages: StreamMessage[]): void {
    for (const message of messages) {
      this.state.timeline.push(message);
      switch (message.kind) {
        case "status": {
          const payload = message.payload ?? {};
          if (payload.node_id) {
            this.state.nodeStatuses[payload.node_id] = payload.status as NodeStatus;
          } else if (payload.plan_id) {
            this.state.planStatus = String(payload.status);
          }
          break;
        }
        case "prompt": {
          const prompt = message.payload as PromptPayload;
          if (!this.state.pendingPrompts.some((p) => p.promptId === prompt.prompt_id)) {
            this.state.pendingPrompts.push({
              promptId: prompt.prompt_id,
              question: prompt.question,
              schema: prompt.output_schema ?? {},
              nodeId: message.node_id,
            });
          }
          break;
        }
        case "answer": {
          const promptId = message.payload?.prompt_id;
          this.state.pendingPrompts = this.state.pendingPrompts.filter(
            (p) => p.promptId !== promptId,
          );
          break;
        }
        case "error": {
          if (message.node_id) {
            this.state.pendingPrompts = this.state.pendingPrompts.filter(
              (p) => p.nodeId !== message.node_id,
            );
          }
          if (message.payload?.error) {
            this.state.error = message.payload.error as ApiErrorBody;
          }
          break;
        }
        default:
          break;
      }
    }
    if (messages.length > 0) {
      this.changed();
    }
  }
}

export interface RegistryTreeNode {
  name: string;
  path: string[];
  hit?: RegistryHit;
  children: RegistryTreeNode[];
}

// Search hits arrive as flat ranked paths; the browser shows them as an
// expandable tree grouped by path prefix.
export function buildRegistryTree(hits: RegistryHit[]): RegistryTreeNode {
  const root: RegistryTreeNode = { name: "", path: [], children: [] };
  for (const hit of hits) {
    let cursor = root;
    for (let depth = 0; depth < hit.path.length; depth += 1) {
      const name = hit.path[depth];
      let child = cursor.children.find((c) => c.name === name);
      if (!child) {
        child = { name, path: hit.path.slice(0, depth + 1), children: [] };
        cursor.children.push(child);
      }
      cursor = child;
    }
    cursor.hit = hit;
  }
  const sortChildren = (node: RegistryTreeNode): void => {
    node.children.sort((a, b) => a.name.localeCompare(b.name));
    node.children.forEach(sortChildren);
  };
  sortChildren(root);
  return root;
}
