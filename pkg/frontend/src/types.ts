/**
 * Payload types of the query API.
 *
 * The server encodes non-finite floats as the strings "NaN", "Infinity",
 * "-Infinity" so responses stay strict JSON; ApiNumber models that.
 */

export type ApiNumber = number | "NaN" | "Infinity" | "-Infinity";

export interface TensorStatsPayload {
  count: number;
  mean: ApiNumber;
  std: ApiNumber;
  abs_mean: ApiNumber;
  min: ApiNumber;
  max: ApiNumber;
  l2_norm: ApiNumber;
  frac_zero: ApiNumber;
  count_nan: number;
  count_inf: number;
}

export interface RunSummary {
  run_id: string;
  trials: string[];
  categories: string[];
  losses: string[];
  finalized: boolean;
  recorded_steps: number;
}

export interface GraphNodePayload {
  node_id: string;
  role: string;
  variant_keys: string[];
}

export interface GraphPayload {
  format_version: number;
  nodes: GraphNodePayload[];
  edges: [string, string][];
  layers: Record<string, number>;
  node_order?: string[];
}

export interface SelectorsPayload {
  trials: string[];
  categories: string[];
  losses: string[];
  nodes: GraphNodePayload[];
  metadata_keys: Record<string, (string | number | boolean)[]>;
  scalar_series: string[];
  max_samples: number;
}

export interface RecordPayload {
  run: string;
  trial: string;
  step: number;
  category: string;
  metadata: Record<string, string | number | boolean>;
  node: string;
  variant: string;
  mode: "forward" | "gradient";
  loss: string | null;
  shape: { batch: number; features: number };
  retained_samples: number[];
  view: "aggregate" | "per_neuron" | "sample";
  stats?: TensorStatsPayload | TensorStatsPayload[];
  sample_index?: number;
  values?: ApiNumber[];
  zscores?: ApiNumber[];
  degenerate_neurons?: number[];
}

export interface NetworkTreePayload {
  name: string;
  own_param_count: number;
  total_param_count: number;
  children: NetworkTreePayload[];
}

export interface NotePayload {
  step: number;
  text: string;
}

export interface ScalarPointPayload {
  step: number;
  value: ApiNumber;
}

export interface ApiErrorBody {
  code: string;
  message: string;
  detail: Record<string, unknown>;
}

/** Numeric view of an ApiNumber, for computations like highlight thresholds. */
export function asNumber(value: ApiNumber): number {
  if (value === "NaN") return Number.NaN;
  if (value === "Infinity") return Number.POSITIVE_INFINITY;
  if (value === "-Infinity") return Number.NEGATIVE_INFINITY;
  return value;
}

/**
 * Verbatim display form of an API value.  The UI never rounds or reformats:
 * what the API returned is what the user reads.
 */
export function displayValue(value: ApiNumber | string | number | boolean | null): string {
  if (value === null) return "";
  return String(value);
}
