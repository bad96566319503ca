/**
 * Thin fetch client for the query API, with latest-wins request gating so a
 * burst of selector changes never paints a stale response over a newer one.
 */

import type {
  ApiErrorBody,
  GraphPayload,
  NetworkTreePayload,
  NotePayload,
  RecordPayload,
  RunSummary,
  ScalarPointPayload,
  SelectorsPayload,
} from "./types.js";

export class ApiError extends Error {
  readonly status: number;
  readonly code: string;
  readonly detail: Record<string, unknown>;

  constructor(status: number, body: ApiErrorBody) {
    super(body.message);
    this.status = status;
    this.code = body.code;
    this.detail = body.detail ?? {};
  }
}

export interface LatestRequestGate {
  next: () => number;
  isLatest: (token: number) => boolean;
  invalidate: () => void;
}

export function createLatestRequestGate(): LatestRequestGate {
  let current = 0;
  return {
    next() {
      current += 1;
      return current;
    },
    isLatest(token: number) {
      return token === current;
    },
    invalidate() {
      current += 1;
    },
  };
}

export class StaleResponseError extends Error {
  constructor() {
    super("response superseded by a newer request");
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  private readonly base: string;
  private readonly fetchImpl: FetchLike;
  private readonly gate = createLatestRequestGate();

  constructor(base = "", fetchImpl: FetchLike = (...args) => fetch(...args)) {
    this.base = base.replace(/\/$/, "");
    this.fetchImpl = fetchImpl;
  }

  private async get<T>(path: string, params?: Record<string, string | number | undefined>): Promise<T> {
    let url = this.base + path;
    if (params) {
      const query = new URLSearchParams();
      for (const [key, value] of Object.entries(params)) {
        if (value !== undefined && value !== "") query.set(key, String(value));
      }
      const text = query.toString();
      if (text) url += "?" + text;
    }
    const response = await this.fetchImpl(url);
    const body = await response.json();
    if (!response.ok) {
      throw new ApiError(response.status, body as ApiErrorBody);
    }
    return body as T;
  }

  /**
   * Like get(), but resolved through the latest-wins gate: if another gated
   * request started after this one, the response is discarded and a
   * StaleResponseError is thrown instead.
   */
  async getLatest<T>(path: string, params?: Record<string, string | number | undefined>): Promise<T> {
    const token = this.gate.next();
    const result = await this.get<T>(path, params);
    if (!this.gate.isLatest(token)) throw new StaleResponseError();
    return result;
  }

  listRuns(): Promise<RunSummary[]> {
    return this.get("/api/runs");
  }

  getGraph(run: string): Promise<GraphPayload> {
    return this.get(`/api/runs/${run}/graph`);
  }

  getSelectors(run: string): Promise<SelectorsPayload> {
    return this.get(`/api/runs/${run}/selectors`);
  }

  listSteps(run: string, trial: string, category?: string,
            metaKey?: string, metaValue?: string): Promise<number[]> {
    return this.get(`/api/runs/${run}/steps`, {
      trial, category, meta_key: metaKey, meta_value: metaValue,
    });
  }

  getRecord(run: string, params: Record<string, string | number | undefined>): Promise<RecordPayload> {
    return this.getLatest(`/api/runs/${run}/record`, params);
  }

  getNetwork(run: string): Promise<NetworkTreePayload> {
    return this.get(`/api/runs/${run}/network`);
  }

  getNotes(run: string): Promise<NotePayload[]> {
    return this.get(`/api/runs/${run}/notes`);
  }

  listScalarSeries(run: string): Promise<{ series: string[] }> {
    return this.get(`/api/runs/${run}/scalars`);
  }

  getScalars(run: string, series: string): Promise<ScalarPointPayload[]> {
    return this.get(`/api/runs/${run}/scalars`, { series });
  }
}
