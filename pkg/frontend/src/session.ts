// Session state and controller logic: control clamping, append-only history,
// latest-wins search debouncing, and the A/B benchmark single-flight guard.
// Everything here is DOM-free so it can be unit tested directly.

import {
  ApiError,
  Client,
  Engine,
  Mode,
  SearchConfig,
  SearchResult,
  TimingsMs,
} from "./api.js";
import { overlapAt10 } from "./fusion.js";

export const LAMBDA_MIN = 0;
export const LAMBDA_MAX = 1;
export const K_MIN = 1;
export const K_MAX = 50;
export const MODES: Mode[] = ["dense", "sparse", "hybrid"];
export const ENGINES: Engine[] = ["flat", "hnsw"];

export interface Clamped<T> {
  value: T;
  clamped: boolean;
}

export function clampLambda(value: number): Clamped<number> {
  if (Number.isNaN(value)) return { value: 0.5, clamped: true };
  const v = Math.min(LAMBDA_MAX, Math.max(LAMBDA_MIN, value));
  return { value: v, clamped: v !== value };
}

export function clampK(value: number): Clamped<number> {
  if (Number.isNaN(value)) return { value: 10, clamped: true };
  const rounded = Math.round(value);
  const v = Math.min(K_MAX, Math.max(K_MIN, rounded));
  return { value: v, clamped: v !== value };
}

export interface Notice {
  control: string;
  message: string;
}

export interface PanelSummary {
  label: "A" | "B";
  topIds: string[];
  totalMs: number;
}

export interface HistoryEntry {
  query: string;
  k: number;
  configs: SearchConfig[];
  panels: PanelSummary[];
  overlap: number | null;
}

export interface PanelData {
  label: "A" | "B";
  rows: SearchResult[];
  timings: TimingsMs;
}

export interface SearchOutcome {
  panels: PanelData[];
  overlap: number | null; // populated only in A/B mode
  banner: string | null;
  stale: boolean; // a newer search superseded this one; discard silently
}

export interface BenchOutcome {
  queued: boolean;
  banner: string | null;
  stats: { a: Record<string, number>; b: Record<string, number> } | null;
  overlap: number | null;
}

function defaultConfig(): SearchConfig {
  return { mode: "hybrid", lambda: 0.5, engine: "hnsw" };
}

export class QuerySession {
  readonly configA: SearchConfig = defaultConfig();
  readonly configB: SearchConfig = defaultConfig();
  k = 10;
  abEnabled = false;
  benchBusy = false;

  private readonly entries: HistoryEntry[] = [];
  private searchToken = 0;

  get history(): readonly HistoryEntry[] {
    return this.entries.slice(); // append-only: callers never see the live array
  }

  private config(target: "a" | "b"): SearchConfig {
    return target === "a" ? this.configA : this.configB;
  }

  // Returns a visible notice when the value had to be clamped or rejected.
  adjustControl(
    target: "a" | "b",
    control: "lambda" | "k" | "mode" | "engine" | "ef_search",
    value: number | string,
  ): Notice | null {
    const cfg = this.config(target);
    switch (control) {
      case "lambda": {
        const c = clampLambda(Number(value));
        cfg.lambda = c.value;
        return c.clamped
          ? { control, message: `lambda clamped to ${c.value} (allowed 0 to 1)` }
          : null;
      }
      case "k": {
        const c = clampK(Number(value));
        this.k = c.value; // k is shared by both panels
        return c.clamped
          ? { control, message: `k clamped to ${c.value} (allowed 1 to 50)` }
          : null;
      }
      case "mode": {
        if (MODES.includes(value as Mode)) {
          cfg.mode = value as Mode;
          return null;
        }
        return { control, message: `unknown mode ${String(value)}; kept ${cfg.mode}` };
      }
      case "engine": {
        if (ENGINES.includes(value as Engine)) {
          cfg.engine = value as Engine;
          return null;
        }
        return { control, message: `unknown engine ${String(value)}; kept ${cfg.engine}` };
      }
      case "ef_search": {
        const n = Math.round(Number(value));
        if (Number.isNaN(n) || n < 1) {
          cfg.ef_search = undefined;
          return { control, message: "ef_search cleared (needs an integer >= 1)" };
        }
        cfg.ef_search = n;
        return null;
      }
    }
  }

  beginSearch(): number {
    this.searchToken += 1;
    return this.searchToken;
  }

  isCurrentSearch(token: number): boolean {
    return token === this.searchToken;
  }

  record(entry: HistoryEntry): void {
    this.entries.push(entry);
  }
}

function summarize(panel: PanelData): PanelSummary {
  return {
    label: panel.label,
    topIds: panel.rows.map((r) => r.item_id),
    totalMs: panel.timings.total,
  };
}

export async function runSearch(
  client: Client,
  session: QuerySession,
  query: string,
): Promise<SearchOutcome> {
  const token = session.beginSearch();
  const configs: SearchConfig[] = session.abEnabled
    ? [session.configA, session.configB]
    : [session.configA];
  let responses;
  try {
    responses = await Promise.all(
      configs.map((cfg) => client.search(query, session.k, cfg)),
    );
  } catch (err) {
    const message = err instanceof ApiError ? err.message : String(err);
    // failed searches leave history untouched
    return { panels: [], overlap: null, banner: message, stale: false };
  }
  if (!session.isCurrentSearch(token)) {
    return { panels: [], overlap: null, banner: null, stale: true };
  }
  const panels: PanelData[] = responses.map((res, i) => ({
    label: i === 0 ? "A" : "B",
    rows: res.results,
    timings: res.timings_ms,
  }));
  const overlap = session.abEnabled
    ? overlapAt10(
        panels[0].rows.map((r) => r.item_id),
        panels[1].rows.map((r) => r.item_id),
      )
    : null;
  session.record({
    query,
    k: session.k,
    configs: configs.map((c) => ({ ...c })),
    panels: panels.map(summarize),
    overlap,
  });
  return { panels, overlap, banner: null, stale: false };
}

function abSide(cfg: SearchConfig): Partial<SearchConfig> {
  const side: Partial<SearchConfig> = {
    mode: cfg.mode,
    lambda: cfg.lambda,
    engine: cfg.engine,
  };
  if (cfg.ef_search !== undefined) side.ef_search = cfg.ef_search;
  return side;
}

export async function runBench(
  client: Client,
  session: QuerySession,
  queries: string[],
): Promise<BenchOutcome> {
  if (queries.length === 0) {
    return { queued: false, banner: "benchmark needs at least one query", stats: null, overlap: null };
  }
  if (session.benchBusy) {
    // one /ab at a time; the caller shows a queued indicator instead
    return { queued: true, banner: null, stats: null, overlap: null };
  }
  session.benchBusy = true;
  try {
    const res = await client.ab(queries, abSide(session.configA), abSide(session.configB));
    return {
      queued: false,
      banner: null,
      stats: { a: { ...res.config_a }, b: { ...res.config_b } },
      overlap: res.config_a["recall_overlap@10"],
    };
  } catch (err) {
    const message = err instanceof ApiError ? err.message : String(err);
    return { queued: false, banner: message, stats: null, overlap: null };
  } finally {
    session.benchBusy = false;
  }
}
