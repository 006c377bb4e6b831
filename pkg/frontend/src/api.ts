// Thin client over the engine's HTTP API. The fetch implementation is
// injectable so tests can run against a scripted server.

import type { ApiErrorBody, ExecutionRecordJson, PlanJson, RegistryHit } from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  readonly code: string;
  readonly status: number;
  readonly detail: unknown;

  constructor(status: number, body: ApiErrorBody) {
    super(body.message);
    this.code = body.code;
    this.status = status;
    this.detail = body.detail;
  }
}

export class ApiClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method, headers: { "content-type": "application/json" } };
    if (body !== undefined) {
      init.body = JSON.stringify(body);
    }
    const response = await this.fetchImpl(this.baseUrl + path, init);
    const text = await response.text();
    const parsed = text ? JSON.parse(text) : null;
    if (!response.ok) {
      throw new ApiError(response.status, parsed as ApiErrorBody);
    }
    return parsed as T;
  }

  createSession(): Promise<{ session_id: string }> {
    return this.request("POST", "/sessions");
  }

  submitQuery(
    sessionId: string,
    question: string,
    objective?: { quality_floor?: number },
  ): Promise<{ plan_id: string; status: string }> {
    const body: Record<string, unknown> = { question };
    if (objective) {
      body.objective = objective;
    }
    return this.request("POST", `/sessions/${sessionId}/query`, body);
  }

  postAnswer(
    sessionId: string,
    promptId: string,
    answer: unknown,
  ): Promise<{ plan_id: string; status: string }> {
    return this.request("POST", `/sessions/${sessionId}/answers`, {
      prompt_id: promptId,
      answer,
    });
  }

  getPlan(planId: string): Promise<{ plan: PlanJson; record: ExecutionRecordJson }> {
    return this.request("GET", `/plans/${planId}`);
  }

  searchRegistry(query: string, level?: string, k = 25): Promise<{ hits: RegistryHit[] }> {
    const params = new URLSearchParams({ query, k: String(k) });
    if (level) {
      params.set("level", level);
    }
    return this.request("GET", `/registry/data?${params.toString()}`);
  }

  streamUrl(sessionId: string, after: number, waitSeconds: number): string {
    return `${this.baseUrl}/sessions/${sessionId}/stream?after=${after}&wait=${waitSeconds}`;
  }

  async pollStream(sessionId: string, after: number, waitSeconds = 5): Promise<string> {
    const response = await this.fetchImpl(this.streamUrl(sessionId, after, waitSeconds), {
      method: "GET",
    });
    if (!response.ok) {
      const body = (await response.json()) as ApiErrorBody;
      throw new ApiError(response.status, body);
    }
    return response.text();
  }
}
