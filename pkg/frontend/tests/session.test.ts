import { describe, expect, it } from "vitest";

import { ApiError, Client, SearchResponse } from "../src/api.js";
import {
  clampK,
  clampLambda,
  QuerySession,
  runBench,
  runSearch,
} from "../src/session.js";

function response(ids: string[]): SearchResponse {
  return {
    results: ids.map((id, i) => ({
      item_id: id,
      rank: i + 1,
      score: 1 - i / 10,
      title: `title ${id}`,
      brand: "b",
      source_scores: { dense: 1 - i / 10 },
    })),
    timings_ms: { encode: 0.1, search: 0.2, lookup: 0.05, total: 0.35 },
  };
}

// Client whose transport is a scripted function; no network involved.
function fakeClient(handler: (path: string, body: any) => unknown): Client {
  const fetchFn = (async (url: RequestInfo | URL, init?: RequestInit) => {
    const path = String(url);
    const body = init?.body ? JSON.parse(String(init.body)) : null;
    const result = handler(path, body);
    if (result instanceof ApiError) {
      return new Response(JSON.stringify({ detail: result.message }), {
        status: result.status,
      });
    }
    return new Response(JSON.stringify(result), { status: 200 });
  }) as typeof fetch;
  return new Client("", fetchFn);
}

describe("control clamping", () => {
  it("clamps lambda to [0, 1]", () => {
    expect(clampLambda(-0.2)).toEqual({ value: 0, clamped: true });
    expect(clampLambda(1.7)).toEqual({ value: 1, clamped: true });
    expect(clampLambda(0.42)).toEqual({ value: 0.42, clamped: false });
  });

  it("clamps k to [1, 50] integers", () => {
    expect(clampK(0)).toEqual({ value: 1, clamped: true });
    expect(clampK(999)).toEqual({ value: 50, clamped: true });
    expect(clampK(7)).toEqual({ value: 7, clamped: false });
    expect(clampK(7.6)).toEqual({ value: 8, clamped: true });
  });

  it("adjustControl returns a visible notice when it clamps", () => {
    const s = new QuerySession();
    const notice = s.adjustControl("a", "k", 0);
    expect(s.k).toBe(1);
    expect(notice?.message).toMatch(/clamped to 1/);
    expect(s.adjustControl("a", "k", 10)).toBeNull();
    const lam = s.adjustControl("a", "lambda", 5);
    expect(s.configA.lambda).toBe(1);
    expect(lam?.message).toMatch(/clamped/);
  });

  it("rejects unknown enum values and keeps the old setting", () => {
    const s = new QuerySession();
    const notice = s.adjustControl("a", "mode", "psychic");
    expect(s.configA.mode).toBe("hybrid");
    expect(notice?.message).toMatch(/unknown mode/);
    expect(s.adjustControl("b", "engine", "flat")).toBeNull();
    expect(s.configB.engine).toBe("flat");
  });
});

describe("history", () => {
  it("is append-only and isolated from callers", () => {
    const s = new QuerySession();
    s.record({ query: "q1", k: 10, configs: [], panels: [], overlap: null });
    const snapshot = s.history;
    s.record({ query: "q2", k: 10, configs: [], panels: [], overlap: null });
    expect(snapshot.length).toBe(1); // old view unchanged
    expect(s.history.length).toBe(2);
    expect(s.history.map((e) => e.query)).toEqual(["q1", "q2"]);
    const view = s.history as unknown as unknown[];
    view.pop(); // mutating the returned view must not touch the session
    expect(s.history.length).toBe(2);
  });
});

describe("runSearch", () => {
  it("single config: one panel, history grows", async () => {
    const s = new QuerySession();
    const client = fakeClient(() => response(["x", "y"]));
    const out = await runSearch(client, s, "shoes");
    expect(out.banner).toBeNull();
    expect(out.panels.length).toBe(1);
    expect(out.panels[0].rows.map((r) => r.item_id)).toEqual(["x", "y"]);
    expect(out.overlap).toBeNull();
    expect(s.history.length).toBe(1);
    expect(s.history[0].panels[0].topIds).toEqual(["x", "y"]);
  });

  it("A/B identical configs: identical panels and 100% overlap", async () => {
    const s = new QuerySession();
    s.abEnabled = true;
    const client = fakeClient(() => response(["x", "y", "z"]));
    const out = await runSearch(client, s, "shoes");
    expect(out.panels.length).toBe(2);
    expect(out.panels[0].rows).toEqual(out.panels[1].rows);
    expect(out.overlap).toBe(1);
  });

  it("service error: banner, history unchanged", async () => {
    const s = new QuerySession();
    const client = fakeClient(() => new ApiError(503, "index loading"));
    const out = await runSearch(client, s, "shoes");
    expect(out.banner).toMatch(/index loading/);
    expect(out.panels).toEqual([]);
    expect(s.history.length).toBe(0);
  });

  it("latest search wins; superseded results are marked stale", async () => {
    const s = new QuerySession();
    let release!: () => void;
    const gate = new Promise<void>((r) => (release = r));
    // the first request is held open until after the second one finishes
    const slow = new Client("", (async () => {
      await gate;
      return new Response(JSON.stringify(response(["old"])), { status: 200 });
    }) as typeof fetch);
    const fast = fakeClient(() => response(["new"]));
    const first = runSearch(slow, s, "first");
    const second = await runSearch(fast, s, "second");
    expect(second.stale).toBe(false);
    release();
    const firstOut = await first;
    expect(firstOut.stale).toBe(true); // caller discards this one
    expect(s.history.map((e) => e.query)).toEqual(["second"]);
  });
});

describe("runBench", () => {
  const abStats = {
    n_queries: 2,
    config_a: { p50: 1.0, p99: 2.0, qps: 900, "recall_overlap@10": 1.0 },
    config_b: { p50: 1.1, p99: 2.1, qps: 880, "recall_overlap@10": 1.0 },
  };

  it("returns stats and the overlap metric", async () => {
    const s = new QuerySession();
    const client = fakeClient((path) => {
      expect(path).toBe("/ab");
      return abStats;
    });
    const out = await runBench(client, s, ["q1", "q2"]);
    expect(out.queued).toBe(false);
    expect(out.overlap).toBe(1.0);
    expect(out.stats?.a.p50).toBe(1.0);
    expect(s.benchBusy).toBe(false);
  });

  it("empty query set is rejected without a network call", async () => {
    const s = new QuerySession();
    let calls = 0;
    const client = fakeClient(() => {
      calls += 1;
      return abStats;
    });
    const out = await runBench(client, s, []);
    expect(out.banner).toMatch(/at least one query/);
    expect(calls).toBe(0);
  });

  it("a second run while busy reports queued and does not double-submit", async () => {
    const s = new QuerySession();
    let calls = 0;
    let release!: () => void;
    const gate = new Promise<void>((r) => (release = r));
    const client = new Client("", (async () => {
      calls += 1;
      await gate;
      return new Response(JSON.stringify(abStats), { status: 200 });
    }) as typeof fetch);
    const first = runBench(client, s, ["q"]);
    const second = await runBench(client, s, ["q"]);
    expect(second.queued).toBe(true);
    expect(calls).toBe(1);
    release();
    const done = await first;
    expect(done.overlap).toBe(1.0);
  });

  it("sends both configs with mode, lambda, and engine", async () => {
    const s = new QuerySession();
    s.adjustControl("b", "mode", "sparse");
    let captured: any = null;
    const client = fakeClient((_path, body) => {
      captured = body;
      return abStats;
    });
    await runBench(client, s, ["q"]);
    expect(captured.queries).toEqual(["q"]);
    expect(captured.config_a).toEqual({ mode: "hybrid", lambda: 0.5, engine: "hnsw" });
    expect(captured.config_b.mode).toBe("sparse");
    expect(captured.config_a.k).toBeUndefined(); // k is fixed server-side
  });
});
