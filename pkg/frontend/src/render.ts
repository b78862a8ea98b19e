// DOM rendering. Formatting helpers are exported separately so the display
// math stays unit-testable without a browser.

import type { SearchResult, TimingsMs } from "./api.js";
import type { PanelData } from "./session.js";

export function formatOverlap(fraction: number): string {
  return `${(fraction * 100).toFixed(0)}%`;
}

export function formatMs(ms: number): string {
  return ms >= 100 ? `${ms.toFixed(0)} ms` : `${ms.toFixed(2)} ms`;
}

export function formatScore(score: number): string {
  return score.toFixed(4);
}

// Bar heights for the latency panel, scaled so the tallest bar is 100.
export function barHeights(values: number[]): number[] {
  const peak = Math.max(...values, 0);
  if (peak <= 0) return values.map(() => 0);
  return values.map((v) => (100 * v) / peak);
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function resultRow(row: SearchResult, preview: boolean): HTMLElement {
  const li = el("li", "result-row");
  li.dataset.itemId = row.item_id;
  li.append(
    el("span", "rank", String(row.rank)),
    el("span", "title", row.title ?? row.item_id),
    el("span", "brand", row.brand ?? ""),
    el("span", "score", formatScore(row.score)),
  );
  if (preview) li.append(el("span", "preview-tag", "preview"));
  return li;
}

function timingsLine(t: TimingsMs): HTMLElement {
  return el(
    "div",
    "timings",
    `encode ${formatMs(t.encode)} · search ${formatMs(t.search)} · ` +
      `lookup ${formatMs(t.lookup)} · total ${formatMs(t.total)}`,
  );
}

export function renderPanel(panel: PanelData, preview = false): HTMLElement {
  const box = el("section", "panel");
  box.dataset.label = panel.label;
  box.append(el("h3", undefined, `Config ${panel.label}`));
  const list = el("ol", "results");
  for (const row of panel.rows) list.append(resultRow(row, preview));
  if (panel.rows.length === 0) list.append(el("li", "empty", "no results"));
  box.append(list, timingsLine(panel.timings));
  return box;
}

export function renderOverlapBadge(fraction: number): HTMLElement {
  const badge = el("span", "overlap-badge", `overlap ${formatOverlap(fraction)}`);
  badge.dataset.value = String(fraction);
  return badge;
}

export function renderBanner(message: string): HTMLElement {
  return el("div", "banner error", message);
}

export function renderLatencyBars(
  labels: string[],
  values: number[],
): HTMLElement {
  const wrap = el("div", "latency-bars");
  const heights = barHeights(values);
  labels.forEach((label, i) => {
    const col = el("div", "bar-col");
    const bar = el("div", "bar");
    bar.style.height = `${heights[i].toFixed(1)}%`;
    bar.title = formatMs(values[i]);
    col.append(bar, el("span", "bar-label", label));
    wrap.append(col);
  });
  return wrap;
}
