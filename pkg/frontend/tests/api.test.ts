import { afterEach, describe, expect, it, vi } from "vitest";

import { ApiClient } from "../src/api.js";

function mockFetch(status: number, body: unknown) {
  return vi.fn(async () => new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  }));
}

afterEach(() => vi.unstubAllGlobals());

describe("ApiClient", () => {
  it("parses status", async () => {
    const payload = {
      mode: "ada", epoch: 1, max_epoch: 5, budget_total: 4, budget_used: 0,
      paused: false, class_names: ["x", "y"],
    };
    vi.stubGlobal("fetch", mockFetch(200, payload));
    const api = new ApiClient("http://srv");
    expect(await api.getStatus()).toEqual(payload);
  });

  it("maps submit outcomes from status codes", async () => {
    const api = new ApiClient("http://srv");
    vi.stubGlobal("fetch", mockFetch(200, { ok: true }));
    expect((await api.submitLabel(1, 0, "t")).kind).toBe("ok");
    vi.stubGlobal("fetch", mockFetch(409, { error: "duplicate" }));
    expect((await api.submitLabel(1, 0, "t")).kind).toBe("duplicate");
    vi.stubGlobal("fetch", mockFetch(409, { error: "budget" }));
    expect((await api.submitLabel(1, 0, "t")).kind).toBe("budget");
    vi.stubGlobal("fetch", mockFetch(400, { error: "label 9 out of range" }));
    const rejected = await api.submitLabel(1, 9, "t");
    expect(rejected.kind).toBe("rejected");
    vi.stubGlobal("fetch", vi.fn(async () => {
      throw new TypeError("connection refused");
    }));
    expect((await api.submitLabel(1, 0, "t")).kind).toBe("network");
  });

  it("sends the label payload the service expects", async () => {
    const spy = mockFetch(200, { ok: true });
    vi.stubGlobal("fetch", spy);
    const api = new ApiClient("http://srv");
    await api.submitLabel(12, 3, "alice");
    const [url, init] = spy.mock.calls[0] as unknown as [string, RequestInit];
    expect(url).toBe("http://srv/labels");
    expect(JSON.parse(String(init.body))).toEqual(
      { sample_id: 12, label: 3, annotator: "alice" });
  });
});
