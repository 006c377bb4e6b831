// Layered topological DAG layout, left to right. Deterministic for a given
// plan JSON: layer = longest path from a source node, rows sorted by node id.

import type { PlanJson } from "./types.js";

export interface LaidOutNode {
  id: string;
  operatorId: string;
  layer: number;
  row: number;
  x: number;
  y: number;
}

export interface LaidOutEdge {
  from: string;
  to: string;
  port: number;
}

export interface Layout {
  nodes: LaidOutNode[];
  edges: LaidOutEdge[];
  width: number;
  height: number;
}

export const NODE_WIDTH = 148;
export const NODE_HEIGHT = 46;
const H_GAP = 70;
const V_GAP = 28;

export function layoutPlan(plan: PlanJson): Layout {
  const ids = Object.keys(plan.nodes).sort();
  const incoming = new Map<string, string[]>(ids.map((id) => [id, []]));
  for (const edge of plan.edges) {
    incoming.get(edge.to)?.push(edge.from);
  }

  const layer = new Map<string, number>();
  const resolve = (id: string, trail: Set<string>): number => {
    const known = layer.get(id);
    if (known !== undefined) {
      return known;
    }
    if (trail.has(id)) {
      return 0; // defensive: cycles are a validation error upstream
    }
    trail.add(id);
    const producers = incoming.get(id) ?? [];
    const value =
      producers.length === 0 ? 0 : Math.max(...producers.map((p) => resolve(p, trail))) + 1;
    layer.set(id, value);
    return value;
  };
  for (const id of ids) {
    resolve(id, new Set());
  }

  const byLayer = new Map<number, string[]>();
  for (const id of ids) {
    const l = layer.get(id) ?? 0;
    if (!byLayer.has(l)) {
      byLayer.set(l, []);
    }
    byLayer.get(l)!.push(id);
  }

  const nodes: LaidOutNode[] = [];
  let maxRow = 0;
  for (const [l, members] of [...byLayer.entries()].sort((a, b) => a[0] - b[0])) {
    members.sort();
    members.forEach((id, row) => {
      nodes.push({
        id,
        operatorId: plan.nodes[id].operator_id,
        layer: l,
        row,
        x: l * (NODE_WIDTH + H_GAP) + 20,
        y: row * (NODE_HEIGHT + V_GAP) + 20,
      });
      maxRow = Math.max(maxRow, row);
    });
  }
  nodes.sort((a, b) => a.id.localeCompare(b.id));

  const layers = byLayer.size;
  return {
    nodes,
    edges: plan.edges.map((e) => ({ from: e.from, to: e.to, port: e.port })),
    width: layers * (NODE_WIDTH + H_GAP) + 40,
    height: (maxRow + 1) * (NODE_HEIGHT + V_GAP) + 40,
  };
}
