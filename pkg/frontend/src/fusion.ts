// Client-side mirror of the server's hybrid score fusion, used only for the
// instant lambda-preview re-rank of already-fetched candidates. The server
// result stays authoritative; this must agree with it to 1e-6.

import type { SearchResult } from "./api.js";

export type Scored = [string, number];

const DEGENERATE_RANGE = 1e-12;

function minMax(scores: Map<string, number>): Map<string, number> {
  if (scores.size === 0) return new Map();
  let lo = Infinity;
  let hi = -Infinity;
  for (const s of scores.values()) {
    if (s < lo) lo = s;
    if (s > hi) hi = s;
  }
  const out = new Map<string, number>();
  if (hi - lo < DEGENERATE_RANGE) {
    for (const id of scores.keys()) out.set(id, 0.5);
    return out;
  }
  for (const [id, s] of scores) out.set(id, (s - lo) / (hi - lo));
  return out;
}

export function fuseScores(dense: Scored[], sparse: Scored[], weight: number): Scored[] {
  if (!(weight >= 0 && weight <= 1)) {
    throw new RangeError("weight must be in [0, 1]");
  }
  const dNorm = minMax(new Map(dense)); // repeated ids: last entry wins
  const sNorm = minMax(new Map(sparse));
  const union = new Set<string>([...dNorm.keys(), ...sNorm.keys()]);
  const fused: Scored[] = [];
  for (const id of union) {
    fused.push([
      id,
      weight * (dNorm.get(id) ?? 0) + (1 - weight) * (sNorm.get(id) ?? 0),
    ]);
  }
  fused.sort((a, b) => b[1] - a[1] || (a[0] < b[0] ? -1 : a[0] > b[0] ? 1 : 0));
  return fused;
}

// Rebuild per-source candidates from a hybrid response's source_scores and
// re-fuse at a new lambda. Only the rows the server returned participate.
export function previewRefuse(rows: SearchResult[], weight: number): Scored[] {
  const dense: Scored[] = [];
  const sparse: Scored[] = [];
  for (const row of rows) {
    if ("dense" in row.source_scores) dense.push([row.item_id, row.source_scores.dense]);
    if ("sparse" in row.source_scores) sparse.push([row.item_id, row.source_scores.sparse]);
  }
  return fuseScores(dense, sparse, weight);
}

// Same overlap the server reports for /ab: Jaccard of the top-10 id sets,
// defined as 1 when both sides are empty.
export function overlapAt10(a: string[], b: string[]): number {
  const setA = new Set(a.slice(0, 10));
  const setB = new Set(b.slice(0, 10));
  if (setA.size === 0 && setB.size === 0) return 1;
  let inter = 0;
  for (const id of setA) if (setB.has(id)) inter += 1;
  return inter / (setA.size + setB.size - inter);
}
