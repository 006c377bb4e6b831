// Payload types mirroring the engine's documented wire formats
// (see ../docs/FORMATS.md in the repository root).

export type NodeStatus =
  | "planned"
  | "refined"
  | "ready"
  | "running"
  | "suspended"
  | "done"
  | "failed";

export interface PlanNodeJson {
  operator_id: string;
  attributes: Record<string, unknown>;
  properties: Record<string, unknown>;
  status: NodeStatus;
}

export interface PlanEdgeJson {
  from: string;
  to: string;
  port: number;
}

export interface PlanJson {
  plan_id: string;
  nodes: Record<string, PlanNodeJson>;
  edges: PlanEdgeJson[];
  alternatives: Record<string, string[]>;
  root: string | null;
  annotations?: Record<string, unknown>;
}

export type MessageKind = "data" | "control" | "status" | "prompt" | "answer" | "error";

export interface StreamMessage {
  seq: number;
  kind: MessageKind;
  node_id?: string;
  payload: any;
}

export interface PromptPayload {
  prompt_id: string;
  question: string;
  output_schema: Record<string, SchemaSpec>;
}

export type SchemaSpec = string | { type?: string; description?: string; required?: boolean };

export type Row = Record<string, unknown>;

export interface TableJson {
  rows: Row[];
  schema?: Record<string, SchemaSpec>;
}

export interface BatchJson {
  tables: TableJson[];
}

export interface NodeRecordJson {
  status: string;
  started_at: number | null;
  finished_at: number | null;
  output_digest: string | null;
  cache_hit: boolean;
  error: string | null;
}

export interface ExecutionRecordJson {
  plan_id: string;
  status: string;
  nodes: Record<string, NodeRecordJson>;
  final: BatchJson | null;
  error: string | null;
}

export interface ApiErrorBody {
  code: string;
  message: string;
  detail?: unknown;
}

export interface RegistryHit {
  path: string[];
  level: string;
  description: string;
  samples: unknown[];
  statistics: Record<string, unknown>;
  score: number;
  exact: boolean;
}
