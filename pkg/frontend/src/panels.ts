/**
 * The metrics band: stats tables, the sample view with z-score highlighting,
 * and explicit renderings of "not recorded" / "sample not retained" states.
 *
 * Every number shown is the API's value verbatim; no rounding, no math
 * beyond choosing highlight classes.
 */

import { ApiError } from "./api.js";
import { asNumber, displayValue } from "./types.js";
import type { RecordPayload, TensorStatsPayload } from "./types.js";

export const Z_HIGHLIGHT_THRESHOLD = 2.0;

const STAT_FIELDS: (keyof TensorStatsPayload)[] = [
  "count", "mean", "std", "abs_mean", "min", "max", "l2_norm", "frac_zero",
  "count_nan", "count_inf",
];

/** CSS class for one z-score cell: none, highlighted, or degenerate. */
export function zClass(z: number): string {
  if (Number.isNaN(z)) return "z-nan";
  if (!Number.isFinite(z)) return "z-degenerate";
  return Math.abs(z) >= Z_HIGHLIGHT_THRESHOLD ? "z-outlier" : "";
}

function tableSkeleton(className: string, headers: string[]):
    { table: HTMLTableElement; body: HTMLElement } {
  const table = document.createElement("table");
  table.className = className;
  const thead = document.createElement("thead");
  const headRow = document.createElement("tr");
  for (const label of headers) {
    const cell = document.createElement("th");
    cell.textContent = label;
    headRow.append(cell);
  }
  thead.append(headRow);
  const body = document.createElement("tbody");
  table.append(thead, body);
  return { table, body };
}

function statsTable(rows: TensorStatsPayload[], labels: string[]): HTMLTableElement {
  const { table, body } = tableSkeleton("stats-table", ["", ...STAT_FIELDS]);
  rows.forEach((stats, index) => {
    const row = document.createElement("tr");
    const label = document.createElement("td");
    label.textContent = labels[index] ?? "";
    label.className = "row-label";
    row.append(label);
    for (const field of STAT_FIELDS) {
      const cell = document.createElement("td");
      cell.textContent = displayValue(stats[field]);
      cell.setAttribute("data-stat", field);
      row.append(cell);
    }
    body.append(row);
  });
  return table;
}

function header(payload: RecordPayload): HTMLElement {
  const line = document.createElement("div");
  line.className = "record-header";
  const mode = payload.mode === "forward" ? "forward" : `gradient(${payload.loss})`;
  line.textContent = `${payload.node} / ${payload.variant} — ${mode} — step ` +
    `${payload.step} (${payload.category}) — batch ${payload.shape.batch} × ` +
    `${payload.shape.features} features`;
  return line;
}

export function renderRecord(container: HTMLElement, payload: RecordPayload): void {
  container.textContent = "";
  container.append(header(payload));

  if (payload.view === "aggregate") {
    const stats = payload.stats as TensorStatsPayload;
    container.append(statsTable([stats], ["aggregate"]));
  } else if (payload.view === "per_neuron") {
    const stats = payload.stats as TensorStatsPayload[];
    container.append(statsTable(stats, stats.map((_, i) => `neuron ${i}`)));
  } else {
    container.append(renderSampleView(payload));
  }
}

function renderSampleView(payload: RecordPayload): HTMLElement {
  const wrap = document.createElement("div");
  wrap.className = "sample-view";
  const caption = document.createElement("div");
  caption.textContent = `sample ${payload.sample_index} of ` +
    `[${payload.retained_samples.join(", ")}] retained — cells with ` +
    `|z| ≥ ${Z_HIGHLIGHT_THRESHOLD} are highlighted`;
  wrap.append(caption);

  const { table, body } = tableSkeleton("sample-table", ["neuron", "value", "z"]);
  const values = payload.values ?? [];
  const zscores = payload.zscores ?? [];
  values.forEach((value, index) => {
    const row = document.createElement("tr");
    const neuronCell = document.createElement("td");
    neuronCell.textContent = String(index);
    const valueCell = document.createElement("td");
    valueCell.textContent = displayValue(value);
    valueCell.setAttribute("data-sample-value", String(index));
    const zCell = document.createElement("td");
    zCell.textContent = displayValue(zscores[index]);
    const cls = zClass(asNumber(zscores[index]));
    if (cls) zCell.className = cls;
    row.append(neuronCell, valueCell, zCell);
    body.append(row);
  });
  wrap.append(table);
  return wrap;
}

/**
 * Error states are first-class renderings, never blank panels: the user must
 * see WHY there is nothing, and for unretained samples, what IS retained.
 */
export function renderRecordError(container: HTMLElement, error: unknown): void {
  container.textContent = "";
  const box = document.createElement("div");
  box.className = "error-state";
  if (error instanceof ApiError && error.code === "not_recorded") {
    box.classList.add("not-recorded");
    box.textContent = `not recorded: ${error.message}`;
  } else if (error instanceof ApiError && error.code === "sample_not_retained") {
    box.classList.add("sample-not-retained");
    const retained = (error.detail.retained as number[] | undefined) ?? [];
    box.textContent = `sample not retained: ${error.message} — retained ` +
      `indices: [${retained.join(", ")}]`;
  } else if (error instanceof ApiError) {
    box.textContent = `${error.code}: ${error.message}`;
    box.append(makeRetryHint());
  } else {
    box.textContent = `request failed: ${String(error)}`;
    box.append(makeRetryHint());
  }
  container.append(box);
}

function makeRetryHint(): HTMLElement {
  const hint = document.createElement("div");
  hint.className = "retry-hint";
  hint.textContent = "change any selector to retry";
  return hint;
}
