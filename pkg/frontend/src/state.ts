/**
 * The complete UI state a user manipulates, serializable into the URL so
 * any view is a shareable deep link.
 */

export type TabName = "graph" | "network" | "notes" | "graphs" | "visualization";
export type ViewName = "aggregate" | "per_neuron" | "sample";

export interface SelectorState {
  run: string;
  trial: string;
  categoryFilter: string;   // "" means no filter
  metaKey: string;          // "" means no metadata filter
  metaValue: string;
  step: number;
  node: string;
  variant: string;
  mode: "forward" | "gradient";
  loss: string;             // meaningful only in gradient mode
  view: ViewName;
  sample: number;           // meaningful only in sample view
  tab: TabName;
}

export function defaultState(): SelectorState {
  return {
    run: "", trial: "", categoryFilter: "", metaKey: "", metaValue: "",
    step: 0, node: "", variant: "value", mode: "forward", loss: "",
    view: "aggregate", sample: 0, tab: "graph",
  };
}

const TABS: TabName[] = ["graph", "network", "notes", "graphs", "visualization"];
const VIEWS: ViewName[] = ["aggregate", "per_neuron", "sample"];

/** Encode into URL search params; defaults are omitted to keep links short. */
export function encodeState(state: SelectorState): string {
  const params = new URLSearchParams();
  const base = defaultState();
  const put = (key: string, value: string | number, fallback: string | number) => {
    if (value !== fallback) params.set(key, String(value));
  };
  put("run", state.run, base.run);
  put("trial", state.trial, base.trial);
  put("category", state.categoryFilter, base.categoryFilter);
  put("meta_key", state.metaKey, base.metaKey);
  put("meta_value", state.metaValue, base.metaValue);
  put("step", state.step, base.step);
  put("node", state.node, base.node);
  put("variant", state.variant, base.variant);
  put("mode", state.mode, base.mode);
  put("loss", state.loss, base.loss);
  put("view", state.view, base.view);
  put("sample", state.sample, base.sample);
  put("tab", state.tab, base.tab);
  return params.toString();
}

export function decodeState(search: string): SelectorState {
  const params = new URLSearchParams(search);
  const state = defaultState();
  state.run = params.get("run") ?? state.run;
  state.trial = params.get("trial") ?? state.trial;
  state.categoryFilter = params.get("category") ?? state.categoryFilter;
  state.metaKey = params.get("meta_key") ?? state.metaKey;
  state.metaValue = params.get("meta_value") ?? state.metaValue;
  state.node = params.get("node") ?? state.node;
  state.variant = params.get("variant") ?? state.variant;
  state.loss = params.get("loss") ?? state.loss;
  const step = Number(params.get("step"));
  if (Number.isInteger(step) && step >= 0) state.step = step;
  const sample = Number(params.get("sample"));
  if (Number.isInteger(sample) && sample >= 0) state.sample = sample;
  const mode = params.get("mode");
  if (mode === "forward" || mode === "gradient") state.mode = mode;
  const view = params.get("view") as ViewName | null;
  if (view && VIEWS.includes(view)) state.view = view;
  const tab = params.get("tab") as TabName | null;
  if (tab && TABS.includes(tab)) state.tab = tab;
  return state;
}

export function statesEqual(a: SelectorState, b: SelectorState): boolean {
  return encodeState(a) === encodeState(b);
}

/** The record-fetch coordinate of a state; null when incomplete. */
export function recordQuery(state: SelectorState):
    Record<string, string | number | undefined> | null {
  if (!state.run || !state.trial || !state.node) return null;
  return {
    trial: state.trial,
    step: state.step,
    node: state.node,
    variant: state.variant,
    mode: state.mode,
    loss: state.mode === "gradient" ? state.loss : undefined,
    view: state.view,
    sample: state.view === "sample" ? state.sample : undefined,
    category: state.categoryFilter || undefined,
    meta_key: state.metaKey || undefined,
    meta_value: state.metaKey ? state.metaValue : undefined,
  };
}
