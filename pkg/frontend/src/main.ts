// Page wiring: one store, one stream subscription per session, renders
// swapped on every store change.

import { ApiClient, ApiError } from "./api.js";
import { renderDag, renderPromptForm, renderRegistryTree, renderResultTable, renderTimeline } from "./render.js";
import { ConsoleStore } from "./store.js";
import { StreamClient } from "./stream.js";

const DEFAULT_BASE = "http://127.0.0.1:8000";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

async function bootstrap(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const api = new ApiClient(params.get("api") ?? DEFAULT_BASE);
  const store = new ConsoleStore();
  let stream: StreamClient | null = null;

  const banner = el<HTMLDivElement>("banner");
  const dagHost = el<HTMLDivElement>("dag");
  const promptsHost = el<HTMLDivElement>("prompts");
  const timelineHost = el<HTMLDivElement>("timeline");
  const resultsHost = el<HTMLDivElement>("results");
  const registryHost = el<HTMLDivElement>("registry");
  const statusBadge = el<HTMLSpanElement>("plan-status");

  store.subscribe((state) => {
    statusBadge.textContent = state.planStatus;
    statusBadge.className = `badge status-${state.planStatus}`;
    banner.textContent = state.error ? `${state.error.code}: ${state.error.message}` : "";
    banner.hidden = !state.error;

    dagHost.replaceChildren(renderDag(state));
    timelineHost.replaceChildren(renderTimeline(state.timeline));

    const forms = state.pendingPrompts.map((prompt) =>
      renderPromptForm(prompt, async (promptId, answer) => {
        try {
          await api.postAnswer(state.sessionId!, promptId, answer);
        } catch (error) {
          if (error instanceof ApiError) {
            store.setError({ code: error.code, message: error.message });
          }
        }
      }),
    );
    promptsHost.replaceChildren(...forms);
    promptsHost.parentElement?.classList.toggle("has-prompts", forms.length > 0);

    resultsHost.replaceChildren(
      state.finalRows ? renderResultTable(state.finalRows) : document.createElement("div"),
    );
    registryHost.replaceChildren(renderRegistryTree(state));
  });

  const session = await api.createSession();
  store.setSession(session.session_id);

  const queryForm = el<HTMLFormElement>("query-form");
  const questionInput = el<HTMLInputElement>("question");
  const floorInput = el<HTMLInputElement>("quality-floor");

  queryForm.addEventListener("submit", async (event) => {
    event.preventDefault();
    const question = questionInput.value.trim();
    if (!question) {
      banner.hidden = false;
      banner.textContent = "question is required";
      return;
    }
    store.startQuery(question);
    stream?.stop();
    stream = new StreamClient(api, session.session_id, (messages) => {
      store.applyMessages(messages);
      refreshRecordIfSettled();
    });
    const streaming = stream.run();
    try {
      const objective = floorInput.value ? { quality_floor: Number(floorInput.value) } : undefined;
      const submitted = await api.submitQuery(session.session_id, question, objective);
      const planned = await api.getPlan(submitted.plan_id);
      store.setPlan(submitted.plan_id, planned.plan);
      store.setFinal(planned.record);
    } catch (error) {
      if (error instanceof ApiError) {
        store.setError({ code: error.code, message: error.message, detail: error.detail });
      } else {
        throw error;
      }
    }
    void streaming;
  });

  async function refreshRecordIfSettled(): Promise<void> {
    const { planId, planStatus } = store.state;
    if (!planId || (planStatus !== "done" && planStatus !== "failed")) {
      return;
    }
    stream?.stop();
    const settled = await api.getPlan(planId);
    store.setFinal(settled.record);
  }

  const registryForm = el<HTMLFormElement>("registry-form");
  const registryQuery = el<HTMLInputElement>("registry-query");
  const registryLevel = el<HTMLSelectElement>("registry-level");
  registryForm.addEventListener("submit", async (event) => {
    event.preventDefault();
    try {
      const result = await api.searchRegistry(
        registryQuery.value,
        registryLevel.value || undefined,
      );
      store.setRegistryHits(result.hits);
    } catch (error) {
      if (error instanceof ApiError) {
        store.setError({ code: error.code, message: error.message });
      }
    }
  });
}

bootstrap().catch((error) => {
  const banner = document.getElementById("banner");
  if (banner) {
    banner.hidden = false;
    banner.textContent = `console failed to start: ${error}`;
  }
});
