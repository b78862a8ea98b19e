// Typed client for the retrieval service. The console never touches
// artifacts directly; everything goes through these four endpoints.

export type Mode = "dense" | "sparse" | "hybrid";
export type Engine = "flat" | "hnsw";

export interface SearchConfig {
  mode: Mode;
  lambda: number;
  engine: Engine;
  ef_search?: number;
  filters?: Record<string, string | number>;
}

export interface SearchResult {
  item_id: string;
  rank: number;
  score: number;
  title: string | null;
  brand: string | null;
  source_scores: Record<string, number>;
}

export interface TimingsMs {
  encode: number;
  search: number;
  lookup: number;
  total: number;
}

export interface SearchResponse {
  results: SearchResult[];
  timings_ms: TimingsMs;
}

export interface ItemResponse {
  item_id: string;
  title: string;
  brand: string | null;
  price: number | null;
  image_url: string | null;
}

export interface AbSideStats {
  p50: number;
  p99: number;
  qps: number;
  "recall_overlap@10": number;
}

export interface AbResponse {
  n_queries: number;
  config_a: AbSideStats;
  config_b: AbSideStats;
}

export interface HealthResponse {
  status: string;
  checksums: Record<string, string>;
  dims: Record<string, number>;
  n_items: number;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

async function detailOf(res: Response): Promise<string> {
  try {
    const body = (await res.json()) as { detail?: unknown };
    if (body && body.detail !== undefined) return String(body.detail);
  } catch {
    // non-JSON error body; fall through to the status line
  }
  return `HTTP ${res.status}`;
}

export function searchBody(query: string, k: number, cfg: SearchConfig): object {
  const body: Record<string, unknown> = {
    query,
    k,
    mode: cfg.mode,
    lambda: cfg.lambda,
    engine: cfg.engine,
  };
  if (cfg.ef_search !== undefined) body.ef_search = cfg.ef_search;
  if (cfg.filters && Object.keys(cfg.filters).length > 0) body.filters = cfg.filters;
  return body;
}

export class Client {
  constructor(
    readonly baseUrl: string = "",
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let res: Response;
    try {
      res = await this.fetchFn(this.baseUrl + path, init);
    } catch (err) {
      throw new ApiError(0, `service unreachable: ${String(err)}`);
    }
    if (!res.ok) throw new ApiError(res.status, await detailOf(res));
    return (await res.json()) as T;
  }

  private post<T>(path: string, body: object): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  health(): Promise<HealthResponse> {
    return this.request<HealthResponse>("/health");
  }

  search(query: string, k: number, cfg: SearchConfig): Promise<SearchResponse> {
    return this.post<SearchResponse>("/search", searchBody(query, k, cfg));
  }

  item(itemId: string): Promise<ItemResponse> {
    return this.request<ItemResponse>(`/item/${encodeURIComponent(itemId)}`);
  }

  ab(
    queries: string[],
    configA: Partial<SearchConfig>,
    configB: Partial<SearchConfig>,
  ): Promise<AbResponse> {
    return this.post<AbResponse>("/ab", {
      queries,
      config_a: configA,
      config_b: configB,
    });
  }
}
