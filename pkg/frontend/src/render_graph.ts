/**
 * SVG rendering of the dependency graph: colored rectangles per role,
 * arrows only for the currently selected node, click to select.
 */

import { layoutGraph, selectedEdges } from "./layout.js";
import type { GraphPayload } from "./types.js";

export const ROLE_COLORS: Record<string, string> = {
  input: "#4d9de0",
  parameter: "#7bc96f",
  "calculated value": "#c9c9c9",
  output: "#b88ae0",
  target: "#e0b04d",
  loss: "#e06c4d",
};

/** API role ids map onto the human legend labels. */
export const ROLE_LABELS: Record<string, string> = {
  input: "input",
  parameter: "parameter",
  calculated: "calculated value",
  output: "output",
  target: "target",
  loss: "loss",
};

const SVG_NS = "http://www.w3.org/2000/svg";

function roleColor(role: string): string {
  return ROLE_COLORS[ROLE_LABELS[role] ?? role] ?? "#c9c9c9";
}

export function renderLegend(container: HTMLElement): void {
  container.textContent = "";
  container.classList.add("legend");
  for (const [label, color] of Object.entries(ROLE_COLORS)) {
    const item = document.createElement("span");
    item.className = "legend-item";
    const swatch = document.createElement("span");
    swatch.className = "legend-swatch";
    swatch.style.backgroundColor = color;
    const text = document.createElement("span");
    text.textContent = label;
    item.append(swatch, text);
    container.append(item);
  }
}

export function renderGraph(container: HTMLElement, graph: GraphPayload,
                            selected: string | null,
                            onSelect: (nodeId: string) => void): void {
  const layout = layoutGraph(graph);
  const edges = selectedEdges(graph, layout, selected);

  container.textContent = "";
  const svg = document.createElementNS(SVG_NS, "svg");
  svg.setAttribute("width", String(layout.width));
  svg.setAttribute("height", String(layout.height));
  svg.setAttribute("data-testid", "graph-svg");

  const defs = document.createElementNS(SVG_NS, "defs");
  const marker = document.createElementNS(SVG_NS, "marker");
  marker.setAttribute("id", "arrowhead");
  marker.setAttribute("markerWidth", "8");
  marker.setAttribute("markerHeight", "8");
  marker.setAttribute("refX", "7");
  marker.setAttribute("refY", "3");
  marker.setAttribute("orient", "auto");
  const tip = document.createElementNS(SVG_NS, "path");
  tip.setAttribute("d", "M0,0 L7,3 L0,6 Z");
  tip.setAttribute("fill", "#444");
  marker.append(tip);
  defs.append(marker);
  svg.append(defs);

  for (const edge of edges) {
    const line = document.createElementNS(SVG_NS, "line");
    line.setAttribute("x1", String(edge.x1));
    line.setAttribute("y1", String(edge.y1));
    line.setAttribute("x2", String(edge.x2));
    line.setAttribute("y2", String(edge.y2));
    line.setAttribute("class", `edge edge-${edge.direction}`);
    line.setAttribute("data-edge", `${edge.from}->${edge.to}`);
    line.setAttribute("stroke", "#444");
    line.setAttribute("stroke-width", "1.5");
    line.setAttribute("marker-end", "url(#arrowhead)");
    svg.append(line);
  }

  for (const box of layout.boxes) {
    const group = document.createElementNS(SVG_NS, "g");
    group.setAttribute("class", "node" + (box.id === selected ? " selected" : ""));
    group.setAttribute("data-node", box.id);

    const rect = document.createElementNS(SVG_NS, "rect");
    rect.setAttribute("x", String(box.x));
    rect.setAttribute("y", String(box.y));
    rect.setAttribute("width", String(box.width));
    rect.setAttribute("height", String(box.height));
    rect.setAttribute("rx", "4");
    rect.setAttribute("fill", roleColor(box.role));
    rect.setAttribute("stroke", box.id === selected ? "#111" : "#777");
    rect.setAttribute("stroke-width", box.id === selected ? "2.5" : "1");

    const label = document.createElementNS(SVG_NS, "text");
    label.setAttribute("x", String(box.x + box.width / 2));
    label.setAttribute("y", String(box.y + box.height / 2 + 4));
    label.setAttribute("text-anchor", "middle");
    label.setAttribute("class", "node-label");
    label.textContent = box.id;

    group.append(rect, label);
    group.addEventListener("click", () => onSelect(box.id));
    svg.append(group);
  }

  container.append(svg);
}
