import { describe, expect, it } from "vitest";

import { ApiError, Client, searchBody } from "../src/api.js";
import { barHeights, formatMs, formatOverlap } from "../src/render.js";

function capture(status: number, payload: unknown) {
  const calls: Array<{ url: string; init?: RequestInit }> = [];
  const fetchFn = (async (url: RequestInfo | URL, init?: RequestInit) => {
    calls.push({ url: String(url), init });
    return new Response(JSON.stringify(payload), { status });
  }) as typeof fetch;
  return { calls, client: new Client("http://svc", fetchFn) };
}

describe("request shaping", () => {
  it("search posts the full config", async () => {
    const { calls, client } = capture(200, { results: [], timings_ms: {} });
    await client.search("red shoes", 5, {
      mode: "hybrid",
      lambda: 0.7,
      engine: "flat",
      ef_search: 64,
      filters: { brand: "nike", price_max: 100 },
    });
    expect(calls[0].url).toBe("http://svc/search");
    expect(calls[0].init?.method).toBe("POST");
    expect(JSON.parse(String(calls[0].init?.body))).toEqual({
      query: "red shoes",
      k: 5,
      mode: "hybrid",
      lambda: 0.7,
      engine: "flat",
      ef_search: 64,
      filters: { brand: "nike", price_max: 100 },
    });
  });

  it("omits optional fields the user did not set", () => {
    const body = searchBody("q", 10, { mode: "dense", lambda: 1, engine: "hnsw" });
    expect(body).toEqual({ query: "q", k: 10, mode: "dense", lambda: 1, engine: "hnsw" });
    const emptyFilters = searchBody("q", 10, {
      mode: "dense",
      lambda: 1,
      engine: "hnsw",
      filters: {},
    });
    expect("filters" in emptyFilters).toBe(false);
  });

  it("item ids are URL-encoded", async () => {
    const { calls, client } = capture(200, { item_id: "a/b" });
    await client.item("a/b");
    expect(calls[0].url).toBe("http://svc/item/a%2Fb");
  });

  it("health hits GET /health", async () => {
    const { calls, client } = capture(200, { status: "ok" });
    const res = await client.health();
    expect(calls[0].url).toBe("http://svc/health");
    expect(res.status).toBe("ok");
  });
});

describe("error mapping", () => {
  it("maps 4xx with a detail body to ApiError", async () => {
    const { client } = capture(400, { detail: "k must be an integer >= 1" });
    await expect(client.search("q", 0 as number, {
      mode: "dense",
      lambda: 0.5,
      engine: "flat",
    })).rejects.toMatchObject({
      name: "ApiError",
      status: 400,
      message: "k must be an integer >= 1",
    });
  });

  it("maps a non-JSON error body to the status line", async () => {
    const fetchFn = (async () =>
      new Response("<html>bad gateway</html>", { status: 502 })) as typeof fetch;
    const client = new Client("", fetchFn);
    await expect(client.health()).rejects.toMatchObject({ status: 502, message: "HTTP 502" });
  });

  it("maps network failures to status 0", async () => {
    const fetchFn = (async () => {
      throw new TypeError("fetch failed");
    }) as typeof fetch;
    const client = new Client("", fetchFn);
    await expect(client.health()).rejects.toMatchObject({ status: 0 });
  });
});

describe("display helpers", () => {
  it("formats overlap as a whole percent", () => {
    expect(formatOverlap(1)).toBe("100%");
    expect(formatOverlap(0.666)).toBe("67%");
    expect(formatOverlap(0)).toBe("0%");
  });

  it("formats milliseconds with scale-aware precision", () => {
    expect(formatMs(0.1234)).toBe("0.12 ms");
    expect(formatMs(250.4)).toBe("250 ms");
  });

  it("scales bar heights to the tallest value", () => {
    expect(barHeights([1, 2, 4])).toEqual([25, 50, 100]);
    expect(barHeights([0, 0])).toEqual([0, 0]);
  });
});
