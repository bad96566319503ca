import { describe, expect, it } from "vitest";

import { layoutGraph, selectedEdges, NODE_WIDTH } from "../src/layout.js";
import type { GraphPayload } from "../src/types.js";

function diamond(): GraphPayload {
  return {
    format_version: 1,
    nodes: [
      { node_id: "a", role: "input", variant_keys: ["value"] },
      { node_id: "b", role: "calculated", variant_keys: ["value"] },
      { node_id: "c", role: "calculated", variant_keys: ["value"] },
      { node_id: "d", role: "loss", variant_keys: ["value"] },
    ],
    edges: [["a", "b"], ["a", "c"], ["b", "d"], ["c", "d"]],
    layers: { a: 0, b: 1, c: 1, d: 2 },
  };
}

describe("layered layout", () => {
  it("puts each layer in its own column", () => {
    const layout = layoutGraph(diamond());
    const byId = new Map(layout.boxes.map((b) => [b.id, b]));
    expect(byId.get("a")!.x).toBeLessThan(byId.get("b")!.x);
    expect(byId.get("b")!.x).toBe(byId.get("c")!.x);
    expect(byId.get("b")!.x).toBeLessThan(byId.get("d")!.x);
    expect(layout.width).toBeGreaterThanOrEqual(3 * NODE_WIDTH);
  });

  it("orders within a layer lexicographically", () => {
    const layout = layoutGraph(diamond());
    const byId = new Map(layout.boxes.map((b) => [b.id, b]));
    expect(byId.get("b")!.y).toBeLessThan(byId.get("c")!.y);
  });

  it("honors a node_order override", () => {
    const graph = { ...diamond(), node_order: ["c", "b"] };
    const layout = layoutGraph(graph);
    const byId = new Map(layout.boxes.map((b) => [b.id, b]));
    expect(byId.get("c")!.y).toBeLessThan(byId.get("b")!.y);
  });

  it("lays out several hundred nodes without blowing up", () => {
    const nodes = Array.from({ length: 300 }, (_, i) => ({
      node_id: `n${i}`, role: "calculated", variant_keys: ["value"],
    }));
    const layers = Object.fromEntries(nodes.map((n, i) => [n.node_id, i % 10]));
    const layout = layoutGraph({ format_version: 1, nodes, edges: [], layers });
    expect(layout.boxes).toHaveLength(300);
    expect(layout.height).toBeGreaterThan(0);
  });
});

describe("edges drawn only for the selected node", () => {
  it("is empty with no selection", () => {
    const graph = diamond();
    expect(selectedEdges(graph, layoutGraph(graph), null)).toEqual([]);
  });

  it("selecting the source shows exactly its two outgoing arrows", () => {
    const graph = diamond();
    const edges = selectedEdges(graph, layoutGraph(graph), "a");
    expect(edges).toHaveLength(2);
    expect(edges.every((e) => e.from === "a" && e.direction === "out")).toBe(true);
  });

  it("selecting the sink shows its two incoming arrows", () => {
    const graph = diamond();
    const edges = selectedEdges(graph, layoutGraph(graph), "d");
    expect(edges).toHaveLength(2);
    expect(edges.every((e) => e.to === "d" && e.direction === "in")).toBe(true);
  });

  it("a node with no edges shows none", () => {
    const graph = diamond();
    graph.nodes.push({ node_id: "lonely", role: "target", variant_keys: ["value"] });
    graph.layers.lonely = 0;
    const edges = selectedEdges(graph, layoutGraph(graph), "lonely");
    expect(edges).toEqual([]);
  });

  it("never includes edges not touching the selection", () => {
    const graph = diamond();
    const edges = selectedEdges(graph, layoutGraph(graph), "b");
    expect(edges.map((e) => `${e.from}->${e.to}`).sort()).toEqual(
      ["a->b", "b->d"]);
  });
});
