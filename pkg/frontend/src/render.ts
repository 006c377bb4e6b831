// DOM rendering. Pure functions from state to elements; main.ts swaps them
// into the page on every store change.

import { layoutPlan, NODE_HEIGHT, NODE_WIDTH } from "./layout.js";
import { buildAnswer, fieldsFromSchema } from "./forms.js";
import type { ConsoleState, PendingPrompt, RegistryTreeNode } from "./store.js";
import { buildRegistryTree } from "./store.js";
import type { Row, StreamMessage } from "./types.js";

const SVG_NS = "http://www.w3.org/2000/svg";

export function renderDag(state: ConsoleState): SVGSVGElement {
  const svg = document.createElementNS(SVG_NS, "svg");
  svg.classList.add("dag");
  if (!state.plan) {
    svg.setAttribute("width", "0");
    svg.setAttribute("height", "0");
    return svg;
  }
  const layout = layoutPlan(state.plan);
  svg.setAttribute("width", String(layout.width));
  svg.setAttribute("height", String(layout.height));
  const positions = new Map(layout.nodes.map((n) => [n.id, n]));

  for (const edge of layout.edges) {
    const from = positions.get(edge.from);
    const to = positions.get(edge.to);
    if (!from || !to) {
      continue;
    }
    const line = document.createElementNS(SVG_NS, "line");
    line.setAttribute("x1", String(from.x + NODE_WIDTH));
    line.setAttribute("y1", String(from.y + NODE_HEIGHT / 2));
    line.setAttribute("x2", String(to.x));
    line.setAttribute("y2", String(to.y + NODE_HEIGHT / 2 + edge.port * 8 - 4));
    line.classList.add("dag-edge");
    svg.appendChild(line);
  }

  for (const node of layout.nodes) {
    const group = document.createElementNS(SVG_NS, "g");
    group.dataset.nodeId = node.id;
    const status = state.nodeStatuses[node.id] ?? "ready";
    const rect = document.createElementNS(SVG_NS, "rect");
    rect.setAttribute("x", String(node.x));
    rect.setAttribute("y", String(node.y));
    rect.setAttribute("width", String(NODE_WIDTH));
    rect.setAttribute("height", String(NODE_HEIGHT));
    rect.setAttribute("rx", "6");
    rect.classList.add("dag-node", `status-${status}`);
    group.appendChild(rect);

    const label = document.createElementNS(SVG_NS, "text");
    label.setAttribute("x", String(node.x + NODE_WIDTH / 2));
    label.setAttribute("y", String(node.y + 19));
    label.setAttribute("text-anchor", "middle");
    label.classList.add("dag-label");
    label.textContent = node.operatorId;
    group.appendChild(label);

    const sub = document.createElementNS(SVG_NS, "text");
    sub.setAttribute("x", String(node.x + NODE_WIDTH / 2));
    sub.setAttribute("y", String(node.y + 36));
    sub.setAttribute("text-anchor", "middle");
    sub.classList.add("dag-sublabel");
    sub.textContent = `${node.id} · ${status}`;
    group.appendChild(sub);

    svg.appendChild(group);
  }
  return svg;
}

export function renderTimeline(messages: StreamMessage[]): HTMLElement {
  const list = document.createElement("ol");
  list.className = "timeline";
  for (const message of messages) {
    const item = document.createElement("li");
    item.className = `timeline-item kind-${message.kind}`;
    const seq = document.createElement("span");
    seq.className = "seq";
    seq.textContent = `#${message.seq}`;
    const kind = document.createElement("span");
    kind.className = "kind";
    kind.textContent = message.kind;
    const body = document.createElement("span");
    body.className = "payload";
    body.textContent = summarize(message);
    item.append(seq, kind, body);
    list.appendChild(item);
  }
  return list;
}

function summarize(message: StreamMessage): string {
  const payload = message.payload ?? {};
  switch (message.kind) {
    case "status":
      return payload.node_id
        ? `${payload.node_id} → ${payload.status}`
        : `plan → ${payload.status}`;
    case "data":
      return `${payload.node_id}: ${payload.row_count} rows${payload.cache_hit ? " (cache)" : ""}`;
    case "prompt":
      return payload.question ?? "";
    case "answer":
      return `answer for ${payload.prompt_id}`;
    case "error":
      return payload.error?.message ?? JSON.stringify(payload);
    default:
      return JSON.stringify(payload);
  }
}

export function renderPromptForm(
  prompt: PendingPrompt,
  onSubmit: (promptId: string, answer: Record<string, unknown>) => void,
): HTMLElement {
  const container = document.createElement("form");
  container.className = "prompt-form";
  container.dataset.promptId = prompt.promptId;

  const question = document.createElement("p");
  question.className = "prompt-question";
  question.textContent = prompt.question;
  container.appendChild(question);

  const fields = fieldsFromSchema(prompt.schema as never);
  const inputs = new Map<string, HTMLInputElement>();
  for (const field of fields) {
    const label = document.createElement("label");
    label.textContent = `${field.name} (${field.declaredType})`;
    const input = document.createElement("input");
    input.name = field.name;
    input.type = field.inputType;
    if (field.required) {
      input.required = true;
    }
    label.appendChild(input);
    container.appendChild(label);
    inputs.set(field.name, input);
  }

  const errors = document.createElement("p");
  errors.className = "form-errors";
  container.appendChild(errors);

  const submit = document.createElement("button");
  submit.type = "submit";
  submit.textContent = "Answer";
  container.appendChild(submit);

  container.addEventListener("submit", (event) => {
    event.preventDefault();
    const values: Record<string, string | boolean> = {};
    for (const [name, input] of inputs) {
      values[name] = input.type === "checkbox" ? input.checked : input.value;
    }
    const result = buildAnswer(fields, values);
    if (!result.ok) {
      errors.textContent = result.errors.join("; ");
      return;
    }
    errors.textContent = "";
    onSubmit(prompt.promptId, result.answer!);
  });
  return container;
}

export function renderResultTable(rows: Row[]): HTMLElement {
  const table = document.createElement("table");
  table.className = "results";
  if (rows.length === 0) {
    const caption = document.createElement("caption");
    caption.textContent = "no rows";
    table.appendChild(caption);
    return table;
  }
  const columns: string[] = [];
  for (const row of rows) {
    for (const name of Object.keys(row)) {
      if (!columns.includes(name)) {
        columns.push(name);
      }
    }
  }
  const head = table.createTHead().insertRow();
  for (const column of columns) {
    const th = document.createElement("th");
    th.textContent = column;
    head.appendChild(th);
  }
  const body = table.createTBody();
  for (const row of rows) {
    const tr = body.insertRow();
    for (const column of columns) {
      const value = row[column];
      tr.insertCell().textContent =
        value === null || value === undefined ? "" : typeof value === "object" ? JSON.stringify(value) : String(value);
    }
  }
  return table;
}

export function renderRegistryTree(state: ConsoleState): HTMLElement {
  const container = document.createElement("div");
  container.className = "registry-tree";
  if (state.registryHits.length === 0) {
    const empty = document.createElement("p");
    empty.className = "empty-state";
    empty.textContent = "No metadata entries match.";
    container.appendChild(empty);
    return container;
  }
  const tree = buildRegistryTree(state.registryHits);
  container.appendChild(renderTreeNodes(tree));
  return container;
}

function renderTreeNodes(node: RegistryTreeNode): HTMLElement {
  const list = document.createElement("ul");
  for (const child of node.children) {
    const item = document.createElement("li");
    if (child.children.length > 0) {
      const details = document.createElement("details");
      details.open = true;
      const summary = document.createElement("summary");
      summary.textContent = describeNode(child);
      details.appendChild(summary);
      details.appendChild(renderTreeNodes(child));
      item.appendChild(details);
    } else {
      item.textContent = describeNode(child);
    }
    list.appendChild(item);
  }
  return list;
}

function describeNode(node: RegistryTreeNode): string {
  if (!node.hit) {
    return node.name;
  }
  const stats = node.hit.statistics ?? {};
  const bits: string[] = [`${node.name} [${node.hit.level}]`];
  if (stats.row_count !== undefined && stats.row_count !== null) {
    bits.push(`rows=${stats.row_count}`);
  }
  if (node.hit.samples?.length) {
    bits.push(`samples: ${node.hit.samples.slice(0, 3).map(String).join(", ")}`);
  }
  if (node.hit.description) {
    bits.push(node.hit.description);
  }
  return bits.join(" — ");
}
