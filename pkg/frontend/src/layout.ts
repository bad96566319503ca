/**
 * Pure geometry for the layered graph view: nodes become rectangles in
 * layer columns, and edge segments exist only for the selected node.
 */

import type { GraphPayload } from "./types.js";

export const NODE_WIDTH = 148;
export const NODE_HEIGHT = 34;
export const COLUMN_GAP = 72;
export const ROW_GAP = 14;
export const PADDING = 16;

export interface NodeBox {
  id: string;
  role: string;
  layer: number;
  x: number;
  y: number;
  width: number;
  height: number;
}

export interface EdgeSegment {
  from: string;
  to: string;
  x1: number;
  y1: number;
  x2: number;
  y2: number;
  direction: "in" | "out";
}

export interface GraphLayout {
  boxes: NodeBox[];
  width: number;
  height: number;
}

/** Column-per-layer layout; within a layer, node_order override wins, then ids. */
export function layoutGraph(graph: GraphPayload): GraphLayout {
  const order = new Map<string, number>();
  (graph.node_order ?? []).forEach((id, index) => order.set(id, index));
  const byLayer = new Map<number, string[]>();
  for (const node of graph.nodes) {
    const layer = graph.layers[node.node_id] ?? 0;
    const bucket = byLayer.get(layer) ?? [];
    bucket.push(node.node_id);
    byLayer.set(layer, bucket);
  }
  const roleOf = new Map(graph.nodes.map((n) => [n.node_id, n.role]));
  const boxes: NodeBox[] = [];
  let height = 0;
  for (const [layer, ids] of byLayer) {
    ids.sort((a, b) => {
      const oa = order.has(a) ? order.get(a)! : Number.MAX_SAFE_INTEGER;
      const ob = order.has(b) ? order.get(b)! : Number.MAX_SAFE_INTEGER;
      return oa !== ob ? oa - ob : a < b ? -1 : a > b ? 1 : 0;
    });
    ids.forEach((id, row) => {
      const x = PADDING + layer * (NODE_WIDTH + COLUMN_GAP);
      const y = PADDING + row * (NODE_HEIGHT + ROW_GAP);
      boxes.push({ id, role: roleOf.get(id) ?? "calculated", layer, x, y,
                   width: NODE_WIDTH, height: NODE_HEIGHT });
      height = Math.max(height, y + NODE_HEIGHT);
    });
  }
  const maxLayer = Math.max(0, ...boxes.map((b) => b.layer));
  const width = PADDING * 2 + (maxLayer + 1) * NODE_WIDTH + maxLayer * COLUMN_GAP;
  return { boxes, width, height: height + PADDING };
}

/**
 * Edge segments to draw: exactly the edges touching the selected node.
 * With no selection, nothing is drawn; dense graphs stay readable.
 */
export function selectedEdges(graph: GraphPayload, layout: GraphLayout,
                              selected: string | null): EdgeSegment[] {
  if (!selected) return [];
  const boxAt = new Map(layout.boxes.map((b) => [b.id, b]));
  const segments: EdgeSegment[] = [];
  for (const [from, to] of graph.edges) {
    if (from !== selected && to !== selected) continue;
    const a = boxAt.get(from);
    const b = boxAt.get(to);
    if (!a || !b) continue;
    segments.push({
      from, to,
      x1: a.x + a.width,
      y1: a.y + a.height / 2,
      x2: b.x,
      y2: b.y + b.height / 2,
      direction: to === selected ? "in" : "out",
    });
  }
  return segments;
}
