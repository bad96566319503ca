/**
 * The auxiliary tabs: Network (parameter tree), Notes (log lines), Graphs
 * (scalar series charts), and the Visualization placeholder.
 */

import { asNumber, displayValue } from "./types.js";
import type { NetworkTreePayload, NotePayload, ScalarPointPayload } from "./types.js";

export function renderNetworkTree(container: HTMLElement,
                                  tree: NetworkTreePayload): void {
  container.textContent = "";
  container.append(treeItem(tree));
}

function treeItem(node: NetworkTreePayload): HTMLElement {
  const details = document.createElement("details");
  details.open = true;
  details.className = "tree-node";
  const summary = document.createElement("summary");
  summary.textContent = `${node.name} — ${node.total_param_count} parameters` +
    (node.own_param_count && node.children.length
      ? ` (${node.own_param_count} own)` : "");
  summary.setAttribute("data-tree-total", String(node.total_param_count));
  details.append(summary);
  for (const child of node.children) {
    details.append(treeItem(child));
  }
  return details;
}

export function renderNotes(container: HTMLElement, notes: NotePayload[]): void {
  container.textContent = "";
  if (!notes.length) {
    container.textContent = "no notes in this run";
    return;
  }
  const list = document.createElement("ul");
  list.className = "notes-list";
  for (const note of notes) {
    const item = document.createElement("li");
    const step = document.createElement("span");
    step.className = "note-step";
    step.textContent = `step ${note.step}`;
    const text = document.createElement("span");
    text.textContent = note.text;
    item.append(step, text);
    list.append(item);
  }
  container.append(list);
}

const SVG_NS = "http://www.w3.org/2000/svg";
const CHART_WIDTH = 640;
const CHART_HEIGHT = 180;

export function renderScalarChart(container: HTMLElement, series: string,
                                  points: ScalarPointPayload[]): void {
  const block = document.createElement("div");
  block.className = "scalar-chart";
  const title = document.createElement("div");
  title.className = "chart-title";
  title.textContent = series;
  block.append(title);

  const finite = points
    .map((p) => ({ step: p.step, value: asNumber(p.value) }))
    .filter((p) => Number.isFinite(p.value));
  if (!finite.length) {
    const empty = document.createElement("div");
    empty.textContent = "no finite points";
    block.append(empty);
    container.append(block);
    return;
  }

  const steps = finite.map((p) => p.step);
  const values = finite.map((p) => p.value);
  const x0 = Math.min(...steps);
  const x1 = Math.max(...steps);
  const y0 = Math.min(...values);
  const y1 = Math.max(...values);
  const sx = (s: number) => x1 === x0 ? CHART_WIDTH / 2
    : ((s - x0) / (x1 - x0)) * (CHART_WIDTH - 20) + 10;
  const sy = (v: number) => y1 === y0 ? CHART_HEIGHT / 2
    : CHART_HEIGHT - (((v - y0) / (y1 - y0)) * (CHART_HEIGHT - 20) + 10);

  const svg = document.createElementNS(SVG_NS, "svg");
  svg.setAttribute("width", String(CHART_WIDTH));
  svg.setAttribute("height", String(CHART_HEIGHT));
  svg.setAttribute("class", "chart");
  const path = document.createElementNS(SVG_NS, "polyline");
  path.setAttribute("points",
    finite.map((p) => `${sx(p.step)},${sy(p.value)}`).join(" "));
  path.setAttribute("fill", "none");
  path.setAttribute("stroke", "#4d9de0");
  path.setAttribute("stroke-width", "1.5");
  svg.append(path);
  block.append(svg);

  const range = document.createElement("div");
  range.className = "chart-range";
  range.textContent = `steps ${x0}…${x1}, values ` +
    `${displayValue(y0)}…${displayValue(y1)}`;
  block.append(range);
  container.append(block);
}

export function renderVisualizationPlaceholder(container: HTMLElement): void {
  container.textContent = "";
  const box = document.createElement("div");
  box.className = "placeholder";
  box.textContent =
    "Custom visualization scripts are not supported in this build. The " +
    "Graph, Network, Notes, and Graphs tabs cover the built-in views; " +
    "everything they show is available programmatically under /api.";
  container.append(box);
}
