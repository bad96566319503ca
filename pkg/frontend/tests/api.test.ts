import { describe, expect, it } from "vitest";

import { ApiClient, ApiError, StaleResponseError, createLatestRequestGate } from "../src/api.js";
import { asNumber, displayValue } from "../src/types.js";

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

describe("latest request gate", () => {
  it("only the newest token wins", () => {
    const gate = createLatestRequestGate();
    const first = gate.next();
    const second = gate.next();
    expect(gate.isLatest(first)).toBe(false);
    expect(gate.isLatest(second)).toBe(true);
  });

  it("invalidate cancels in-flight tokens", () => {
    const gate = createLatestRequestGate();
    const token = gate.next();
    gate.invalidate();
    expect(gate.isLatest(token)).toBe(false);
  });
});

describe("api client", () => {
  it("builds query strings and parses payloads", async () => {
    const urls: string[] = [];
    const client = new ApiClient("http://host", async (url) => {
      urls.push(url);
      return jsonResponse([1, 2, 3]);
    });
    const steps = await client.listSteps("run1", "t0", "default");
    expect(steps).toEqual([1, 2, 3]);
    expect(urls[0]).toBe("http://host/api/runs/run1/steps?trial=t0&category=default");
  });

  it("raises structured errors", async () => {
    const client = new ApiClient("", async () => jsonResponse({
      code: "sample_not_retained",
      message: "sample 9 was not retained",
      detail: { retained: [0, 1] },
    }, 404));
    try {
      await client.getRecord("r", { trial: "t", step: 0, node: "n" });
      expect.unreachable();
    } catch (error) {
      expect(error).toBeInstanceOf(ApiError);
      const apiError = error as ApiError;
      expect(apiError.status).toBe(404);
      expect(apiError.code).toBe("sample_not_retained");
      expect(apiError.detail.retained).toEqual([0, 1]);
    }
  });

  it("discards stale responses, latest wins", async () => {
    let release: (() => void) | null = null;
    const slow = new Promise<void>((resolve) => { release = resolve; });
    let calls = 0;
    const client = new ApiClient("", async () => {
      calls += 1;
      if (calls === 1) await slow;   // first request resolves after the second
      return jsonResponse({ value: calls });
    });
    const first = client.getLatest<{ value: number }>("/api/a");
    const second = client.getLatest<{ value: number }>("/api/b");
    const fast = await second;
    expect(fast.value).toBe(2);
    release!();
    await expect(first).rejects.toBeInstanceOf(StaleResponseError);
  });
});

describe("api number handling", () => {
  it("decodes the non-finite string markers", () => {
    expect(asNumber("NaN")).toBeNaN();
    expect(asNumber("Infinity")).toBe(Number.POSITIVE_INFINITY);
    expect(asNumber("-Infinity")).toBe(Number.NEGATIVE_INFINITY);
    expect(asNumber(1.5)).toBe(1.5);
  });

  it("displays values verbatim", () => {
    expect(displayValue(0.30000000000000004)).toBe("0.30000000000000004");
    expect(displayValue("NaN")).toBe("NaN");
    expect(displayValue(42)).toBe("42");
    expect(displayValue(null)).toBe("");
  });
});
