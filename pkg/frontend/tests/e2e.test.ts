/**
 * End-to-end: a real backend (demo run + API server spawned as child
 * processes) with the full app rendering into the DOM.  Asserts the "zero
 * business logic" contract: everything on screen is byte-equal to the API
 * response for the same coordinates, arrows exist only for the selected
 * node, and failure states are explicit.
 */

import { afterAll, beforeAll, describe, expect, it } from "vitest";
import { spawn, spawnSync, type ChildProcess } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { App } from "../src/app.js";
import type { RecordPayload, TensorStatsPayload } from "../src/types.js";

let workdir: string;
let server: ChildProcess;
let base = "";
let app: App;

function memoryUrl() {
  let search = "";
  return { read: () => search, write: (s: string) => { search = s; },
           current: () => search };
}

const urlAdapter = memoryUrl();

async function apiGet(path: string): Promise<unknown> {
  const response = await fetch(base + path);
  if (!response.ok) throw new Error(`${path} -> ${response.status}`);
  return response.json();
}

beforeAll(async () => {
  workdir = mkdtempSync(join(tmpdir(), "tracescope-ui-e2e-"));
  const train = spawnSync("python3", [
    "-m", "tracescope.cli", "demo-train", "--steps", "120", "--seed", "2",
    "--out", join(workdir, "demo"),
  ], { encoding: "utf-8" });
  if (train.status !== 0) {
    throw new Error(`demo-train failed: ${train.stderr}`);
  }

  server = spawn("python3", [
    "-m", "tracescope.cli", "serve", "--data-root", workdir, "--port", "0",
  ], { stdio: ["ignore", "pipe", "pipe"] });
  base = await new Promise<string>((resolve, reject) => {
    let buffer = "";
    const timer = setTimeout(() => reject(new Error("server did not start")), 30_000);
    server.stdout!.on("data", (chunk: Buffer) => {
      buffer += chunk.toString();
      const match = buffer.match(/http:\/\/[0-9.]+:\d+/);
      if (match) {
        clearTimeout(timer);
        resolve(match[0]);
      }
    });
    server.on("exit", (code) => reject(new Error(`server exited early: ${code}`)));
  });

  // make the emulated page same-origin with the API server
  (window as unknown as { happyDOM: { setURL(url: string): void } })
    .happyDOM.setURL(base + "/");

  const root = document.createElement("div");
  document.body.append(root);
  app = new App(root, base, urlAdapter);
  await app.start();
});

afterAll(() => {
  server?.kill();
  rmSync(workdir, { recursive: true, force: true });
});

function statCells(pane: Element): Map<string, string> {
  return new Map([...pane.querySelectorAll("td[data-stat]")].map((cell) =>
    [cell.getAttribute("data-stat")!, cell.textContent!]));
}

function recordPane(): Element {
  return document.querySelector('[data-pane="record"]')!;
}

describe("selector bar is populated from the API alone", () => {
  it("trials, categories, losses, nodes, steps all match list endpoints", async () => {
    const selectors = await apiGet("/api/runs/demo/selectors") as {
      trials: string[]; categories: string[]; losses: string[];
      nodes: { node_id: string }[];
    };
    const options = (name: string) =>
      [...document.querySelectorAll(`select[data-selector="${name}"] option`)]
        .map((o) => (o as HTMLOptionElement).value);
    expect(options("trial")).toEqual(selectors.trials);
    expect(options("category")).toEqual(["", ...selectors.categories]);
    expect(options("loss")).toEqual(selectors.losses);
    expect(options("node")).toEqual(selectors.nodes.map((n) => n.node_id));

    const steps = await apiGet(`/api/runs/demo/steps?trial=trial_0`) as number[];
    expect(options("step")).toEqual(steps.map(String));
  });
});

describe("displayed values are byte-equal to the API response", () => {
  async function expectPaneMatchesApi(): Promise<void> {
    const s = app.state;
    const params = new URLSearchParams({
      trial: s.trial, step: String(s.step), node: s.node, variant: s.variant,
      mode: s.mode, view: s.view,
    });
    if (s.mode === "gradient") params.set("loss", s.loss);
    if (s.view === "sample") params.set("sample", String(s.sample));
    const payload = await apiGet(
      `/api/runs/demo/record?${params.toString()}`) as RecordPayload;

    if (s.view === "aggregate") {
      const cells = statCells(recordPane());
      const stats = payload.stats as TensorStatsPayload;
      for (const [field, text] of cells) {
        expect(text).toBe(String(stats[field as keyof TensorStatsPayload]));
      }
      expect(cells.size).toBe(10);
    } else if (s.view === "sample") {
      const values = [...recordPane().querySelectorAll("[data-sample-value]")]
        .map((c) => c.textContent);
      expect(values).toEqual(payload.values!.map(String));
    }
  }

  it("for the initial aggregate view", async () => {
    expect(app.state.view).toBe("aggregate");
    await expectPaneMatchesApi();
  });

  it("after switching mode forward -> gradient(main)", async () => {
    const before = statCells(recordPane());
    await app.update({ node: "w1", mode: "forward" });
    const forwardCells = statCells(recordPane());
    await app.update({ mode: "gradient", loss: "main" });
    const gradientCells = statCells(recordPane());
    expect(gradientCells).not.toEqual(forwardCells);
    await expectPaneMatchesApi();
    expect(before).toBeDefined();
  });

  it("after switching steps and nodes", async () => {
    const steps = await apiGet(`/api/runs/demo/steps?trial=trial_0`) as number[];
    await app.update({ node: "input", mode: "forward", step: steps[steps.length - 1] });
    await expectPaneMatchesApi();
    await app.update({ node: "hidden" });
    expect(app.state.variant).toBe("t0");
    await expectPaneMatchesApi();
  });

  it("for the sample view, values verbatim", async () => {
    await app.update({ node: "input", variant: "value", view: "sample", sample: 0 });
    await expectPaneMatchesApi();
  });

  it("per-neuron view renders one row per feature", async () => {
    await app.update({ view: "per_neuron" });
    const payload = app.lastRecord!;
    const rows = recordPane().querySelectorAll("tbody tr");
    expect(rows.length).toBe(payload.shape.features);
    await app.update({ view: "aggregate" });
  });
});

describe("dependency graph pane", () => {
  it("draws arrows only for the selected node", async () => {
    await app.update({ tab: "graph", node: "hidden" });
    const graph = await apiGet("/api/runs/demo/graph") as {
      edges: [string, string][];
    };
    const touching = graph.edges.filter(([u, v]) => u === "hidden" || v === "hidden");
    const lines = document.querySelectorAll("line.edge");
    expect(lines.length).toBe(touching.length);
    for (const line of lines) {
      expect(line.getAttribute("data-edge")).toContain("hidden");
    }
  });

  it("clicking a node selects it and refetches", async () => {
    const target = document.querySelector('[data-node="target"]')!;
    target.dispatchEvent(new MouseEvent("click", { bubbles: true }));
    await new Promise((resolve) => setTimeout(resolve, 300));
    expect(app.state.node).toBe("target");
    const lines = document.querySelectorAll("line.edge");
    for (const line of lines) {
      expect(line.getAttribute("data-edge")).toContain("target");
    }
  });

  it("legend names the tensor roles", () => {
    const legend = document.querySelector('[data-pane="legend"]')!.textContent!;
    for (const role of ["input", "parameter", "calculated value", "target", "loss"]) {
      expect(legend).toContain(role);
    }
  });
});

describe("explicit empty states", () => {
  it("not-recorded coordinates say so", async () => {
    await app.update({ node: "target", variant: "value", mode: "gradient",
                       loss: "aux", view: "aggregate" });
    expect(recordPane().querySelector(".not-recorded")).not.toBeNull();
    expect(recordPane().textContent).toContain("not recorded");
  });

  it("unretained samples list what is retained", async () => {
    await app.update({ node: "input", mode: "forward", view: "sample",
                       sample: 999 });
    const pane = recordPane();
    expect(pane.querySelector(".sample-not-retained")).not.toBeNull();
    expect(pane.textContent).toContain("[0, 1, 2, 3, 4, 5, 6, 7]");
    await app.update({ view: "aggregate" });
  });
});

describe("auxiliary tabs", () => {
  it("network tree totals match the API", async () => {
    await app.update({ tab: "network" });
    const tree = await apiGet("/api/runs/demo/network") as {
      total_param_count: number;
    };
    const root = document.querySelector("[data-tree-total]")!;
    expect(root.getAttribute("data-tree-total")).toBe(String(tree.total_param_count));
  });

  it("notes render with steps", async () => {
    await app.update({ tab: "notes" });
    const notes = await apiGet("/api/runs/demo/notes") as { text: string }[];
    const pane = document.querySelector('[data-pane="notes"]')!;
    expect(pane.querySelectorAll("li").length).toBe(notes.length);
  });

  it("graphs tab draws every scalar series", async () => {
    await app.update({ tab: "graphs" });
    const { series } = await apiGet("/api/runs/demo/scalars") as { series: string[] };
    const pane = document.querySelector('[data-pane="graphs"]')!;
    expect(pane.querySelectorAll(".scalar-chart").length).toBe(series.length);
    expect(pane.querySelectorAll("polyline").length).toBe(series.length);
  });

  it("visualization tab is an explicit placeholder", async () => {
    await app.update({ tab: "visualization" });
    const pane = document.querySelector('[data-pane="visualization"]')!;
    expect(pane.textContent).toContain("not supported in this build");
  });
});

describe("responsiveness", () => {
  it("a selector change settles within the repaint budget", async () => {
    await app.update({ tab: "graph", node: "input", variant: "value",
                       mode: "forward", view: "aggregate" });
    const steps = await apiGet(`/api/runs/demo/steps?trial=trial_0`) as number[];
    const begin = performance.now();
    await app.update({ step: steps[1] });
    const elapsed = performance.now() - begin;
    // 100 ms repaint budget on top of a < 50 ms API response
    expect(elapsed).toBeLessThan(150);
  });
});

describe("deep links", () => {
  it("state round-trips through the URL", async () => {
    await app.update({ tab: "graph", node: "prediction", mode: "gradient",
                       loss: "combined", view: "aggregate" });
    const encoded = urlAdapter.current();
    expect(encoded).toContain("node=prediction");
    expect(encoded).toContain("loss=combined");
    const { decodeState } = await import("../src/state.js");
    const decoded = decodeState(encoded);
    expect(decoded.node).toBe("prediction");
    expect(decoded.mode).toBe("gradient");
    expect(decoded.loss).toBe("combined");
  });
});
