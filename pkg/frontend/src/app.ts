/**
 * Application wiring: selector bar on top, the dependency graph in the
 * middle, metrics at the bottom, with Network / Notes / Graphs /
 * Visualization as alternative tabs.
 *
 * The UI holds no business logic: every displayed number comes verbatim
 * from the API, selector options come from list endpoints, and the state is
 * URL-encoded so any view is a deep link.  Rapid selector changes are
 * resolved latest-wins.
 */

import { ApiClient, StaleResponseError } from "./api.js";
import { renderGraph, renderLegend } from "./render_graph.js";
import { renderRecord, renderRecordError } from "./panels.js";
import {
  renderNetworkTree,
  renderNotes,
  renderScalarChart,
  renderVisualizationPlaceholder,
} from "./tabs.js";
import { decodeState, defaultState, encodeState, recordQuery } from "./state.js";
import type { SelectorState, TabName } from "./state.js";
import type { GraphPayload, RecordPayload, SelectorsPayload } from "./types.js";

const TAB_LABELS: Record<TabName, string> = {
  graph: "Graph",
  network: "Network",
  notes: "Notes",
  graphs: "Graphs",
  visualization: "Visualization",
};

interface UrlAdapter {
  read(): string;
  write(search: string): void;
}

function windowUrlAdapter(): UrlAdapter {
  return {
    read: () => window.location.search,
    write: (search: string) => {
      const url = search ? `?${search}` : window.location.pathname;
      window.history.replaceState(null, "", url);
    },
  };
}

export class App {
  readonly api: ApiClient;
  state: SelectorState;
  lastRecord: RecordPayload | null = null;
  lastError: unknown = null;

  private readonly root: HTMLElement;
  private readonly url: UrlAdapter;
  private graph: GraphPayload | null = null;
  private selectors: SelectorsPayload | null = null;
  private steps: number[] = [];
  private controls: Record<string, HTMLSelectElement> = {};
  private panels: Record<string, HTMLElement> = {};

  constructor(root: HTMLElement, apiBase = "", url?: UrlAdapter) {
    this.root = root;
    this.api = new ApiClient(apiBase);
    this.url = url ?? windowUrlAdapter();
    this.state = decodeState(this.url.read());
    this.buildSkeleton();
  }

  // -- boot ------------------------------------------------------------------

  async start(): Promise<void> {
    const runs = await this.api.listRuns();
    const select = this.controls.run;
    select.textContent = "";
    for (const run of runs) {
      const option = document.createElement("option");
      option.value = run.run_id;
      option.textContent = `${run.run_id} (${run.recorded_steps} steps)`;
      select.append(option);
    }
    if (!runs.length) {
      this.panels.record.textContent = "no runs under the data root";
      return;
    }
    if (!runs.some((r) => r.run_id === this.state.run)) {
      this.state.run = runs[0].run_id;
    }
    select.value = this.state.run;
    await this.loadRun();
  }

  private async loadRun(): Promise<void> {
    const run = this.state.run;
    this.selectors = await this.api.getSelectors(run);
    this.graph = await this.api.getGraph(run);
    if (!this.selectors.trials.includes(this.state.trial)) {
      this.state.trial = this.selectors.trials[0] ?? "";
    }
    if (!this.graph.nodes.some((n) => n.node_id === this.state.node)) {
      this.state.node = this.graph.nodes[0]?.node_id ?? "";
    }
    this.syncVariantForNode();
    if (!this.selectors.losses.includes(this.state.loss)) {
      this.state.loss = this.selectors.losses[0] ?? "";
    }
    this.populateSelectorBar();
    await this.reloadSteps();
    await this.refresh();
  }

  // -- state transitions -------------------------------------------------------

  /** Apply a state change; resolves when the UI has settled. */
  async update(partial: Partial<SelectorState>): Promise<void> {
    const before = this.state;
    this.state = { ...this.state, ...partial };
    if (partial.node !== undefined && partial.variant === undefined) {
      this.syncVariantForNode();
    }
    if (partial.run !== undefined && partial.run !== before.run) {
      await this.loadRun();
      return;
    }
    const stepsStale = ["trial", "categoryFilter", "metaKey", "metaValue"]
      .some((key) => (partial as Record<string, unknown>)[key] !== undefined);
    if (stepsStale) {
      await this.reloadSteps();
    }
    await this.refresh();
  }

  private syncVariantForNode(): void {
    const node = this.graph?.nodes.find((n) => n.node_id === this.state.node);
    if (node && !node.variant_keys.includes(this.state.variant)) {
      this.state.variant = node.variant_keys[0];
    }
  }

  private async reloadSteps(): Promise<void> {
    if (!this.state.run || !this.state.trial) {
      this.steps = [];
      return;
    }
    this.steps = await this.api.listSteps(
      this.state.run, this.state.trial,
      this.state.categoryFilter || undefined,
      this.state.metaKey || undefined,
      this.state.metaKey ? this.state.metaValue : undefined);
    if (!this.steps.includes(this.state.step)) {
      // the step control snaps onto recorded steps only
      this.state.step = this.steps[0] ?? 0;
    }
  }

  /** Re-render everything the current state implies; one record fetch max. */
  async refresh(): Promise<void> {
    this.url.write(encodeState(this.state));
    this.populateSelectorBar();
    this.showTab(this.state.tab);
    if (this.state.tab === "graph") {
      this.renderGraphPane();
      await this.fetchAndRenderRecord();
    } else if (this.state.tab === "network") {
      await this.renderNetworkPane();
    } else if (this.state.tab === "notes") {
      await this.renderNotesPane();
    } else if (this.state.tab === "graphs") {
      await this.renderGraphsPane();
    } else {
      renderVisualizationPlaceholder(this.panels.visualization);
    }
  }

  private async fetchAndRenderRecord(): Promise<void> {
    const query = recordQuery(this.state);
    if (!query) {
      this.panels.record.textContent = "select a node";
      return;
    }
    try {
      const payload = await this.api.getRecord(this.state.run, query);
      this.lastRecord = payload;
      this.lastError = null;
      renderRecord(this.panels.record, payload);
    } catch (error) {
      if (error instanceof StaleResponseError) return;  // a newer fetch won
      this.lastRecord = null;
      this.lastError = error;
      renderRecordError(this.panels.record, error);
    }
  }

  // -- pane renderers ----------------------------------------------------------

  private renderGraphPane(): void {
    if (!this.graph) return;
    renderGraph(this.panels.graph, this.graph, this.state.node || null,
                (nodeId) => { void this.update({ node: nodeId }); });
    renderLegend(this.panels.legend);
  }

  private async renderNetworkPane(): Promise<void> {
    try {
      renderNetworkTree(this.panels.network,
                        await this.api.getNetwork(this.state.run));
    } catch (error) {
      this.panels.network.textContent = `no module tree: ${String(error)}`;
    }
  }

  private async renderNotesPane(): Promise<void> {
    renderNotes(this.panels.notes, await this.api.getNotes(this.state.run));
  }

  private async renderGraphsPane(): Promise<void> {
    const container = this.panels.graphs;
    container.textContent = "";
    const { series } = await this.api.listScalarSeries(this.state.run);
    if (!series.length) {
      container.textContent = "no scalar series in this run";
      return;
    }
    for (const name of series) {
      renderScalarChart(container, name,
                        await this.api.getScalars(this.state.run, name));
    }
  }

  // -- DOM scaffolding -----------------------------------------------------------

  private buildSkeleton(): void {
    this.root.textContent = "";
    const bar = document.createElement("div");
    bar.className = "selector-bar";

    const tabs = document.createElement("div");
    tabs.className = "tabs";
    for (const tab of Object.keys(TAB_LABELS) as TabName[]) {
      const label = document.createElement("label");
      const radio = document.createElement("input");
      radio.type = "radio";
      radio.name = "tab";
      radio.value = tab;
      radio.addEventListener("change", () => { void this.update({ tab }); });
      label.append(radio, document.createTextNode(TAB_LABELS[tab]));
      tabs.append(label);
    }
    this.root.append(tabs, bar);

    const makeSelect = (name: string, label: string,
                        onChange: (value: string) => void): HTMLSelectElement => {
      const wrap = document.createElement("label");
      wrap.className = "selector";
      wrap.append(document.createTextNode(label));
      const select = document.createElement("select");
      select.name = name;
      select.setAttribute("data-selector", name);
      select.addEventListener("change", () => onChange(select.value));
      wrap.append(select);
      bar.append(wrap);
      this.controls[name] = select;
      return select;
    };

    makeSelect("run", "run", (v) => { void this.update({ run: v }); });
    makeSelect("trial", "trial", (v) => { void this.update({ trial: v }); });
    makeSelect("category", "category",
               (v) => { void this.update({ categoryFilter: v }); });
    makeSelect("meta", "filter", (v) => {
      const [key, value] = v ? v.split("=", 2) : ["", ""];
      void this.update({ metaKey: key, metaValue: value ?? "" });
    });
    makeSelect("step", "step", (v) => { void this.update({ step: Number(v) }); });
    makeSelect("node", "node", (v) => { void this.update({ node: v }); });
    makeSelect("variant", "variant", (v) => { void this.update({ variant: v }); });
    makeSelect("mode", "mode", (v) => {
      void this.update({ mode: v === "forward" ? "forward" : "gradient" });
    });
    makeSelect("loss", "loss", (v) => { void this.update({ loss: v }); });
    makeSelect("view", "view", (v) => {
      void this.update({ view: v as SelectorState["view"] });
    });
    makeSelect("sample", "sample",
               (v) => { void this.update({ sample: Number(v) }); });

    const main = document.createElement("div");
    main.className = "main";
    for (const name of ["graph", "legend", "record", "network", "notes",
                        "graphs", "visualization"]) {
      const pane = document.createElement("div");
      pane.className = `pane pane-${name}`;
      pane.setAttribute("data-pane", name);
      main.append(pane);
      this.panels[name] = pane;
    }
    this.root.append(main);
  }

  private setOptions(name: string, values: string[], labels?: string[],
                     current?: string): void {
    const select = this.controls[name];
    const previous = current ?? select.value;
    select.textContent = "";
    values.forEach((value, index) => {
      const option = document.createElement("option");
      option.value = value;
      option.textContent = labels?.[index] ?? value;
      select.append(option);
    });
    select.value = values.includes(previous) ? previous : (values[0] ?? "");
  }

  private populateSelectorBar(): void {
    if (!this.selectors || !this.graph) return;
    this.setOptions("trial", this.selectors.trials, undefined, this.state.trial);
    this.setOptions("category", ["", ...this.selectors.categories],
                    ["(all)", ...this.selectors.categories],
                    this.state.categoryFilter);
    const metaOptions = [""];
    const metaLabels = ["(none)"];
    for (const [key, values] of Object.entries(this.selectors.metadata_keys)) {
      for (const value of values) {
        metaOptions.push(`${key}=${value}`);
        metaLabels.push(`${key} = ${value}`);
      }
    }
    this.setOptions("meta", metaOptions, metaLabels,
                    this.state.metaKey
                      ? `${this.state.metaKey}=${this.state.metaValue}` : "");
    this.setOptions("step", this.steps.map(String), undefined,
                    String(this.state.step));
    this.setOptions("node", this.graph.nodes.map((n) => n.node_id), undefined,
                    this.state.node);
    const node = this.graph.nodes.find((n) => n.node_id === this.state.node);
    this.setOptions("variant", node?.variant_keys ?? ["value"], undefined,
                    this.state.variant);
    this.setOptions("mode", ["forward", "gradient"], undefined, this.state.mode);
    this.setOptions("loss", this.selectors.losses, undefined, this.state.loss);
    this.controls.loss.disabled = this.state.mode !== "gradient";
    this.setOptions("view", ["aggregate", "per_neuron", "sample"], undefined,
                    this.state.view);
    const retained = this.lastRecord?.retained_samples?.length
      ? this.lastRecord.retained_samples
      : Array.from({ length: this.selectors.max_samples }, (_, i) => i);
    this.setOptions("sample", retained.map(String), undefined,
                    String(this.state.sample));
    this.controls.sample.disabled = this.state.view !== "sample";

    const radios = this.root.querySelectorAll<HTMLInputElement>("input[name=tab]");
    radios.forEach((radio) => { radio.checked = radio.value === this.state.tab; });
  }

  private showTab(tab: TabName): void {
    const visible: Record<TabName, string[]> = {
      graph: ["graph", "legend", "record"],
      network: ["network"],
      notes: ["notes"],
      graphs: ["graphs"],
      visualization: ["visualization"],
    };
    for (const [name, pane] of Object.entries(this.panels)) {
      pane.style.display = visible[tab].includes(name) ? "" : "none";
    }
  }
}

export async function bootApp(root: HTMLElement, apiBase = "",
                              url?: UrlAdapter): Promise<App> {
  const app = new App(root, apiBase, url);
  await app.start();
  return app;
}

export { defaultState };
