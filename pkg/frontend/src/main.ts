// Page wiring: binds the controls to the session, renders outcomes, and
// keeps the lambda slider's instant preview in sync with cached candidates.

import { Client } from "./api.js";
import { previewRefuse } from "./fusion.js";
import {
  renderBanner,
  renderLatencyBars,
  renderOverlapBadge,
  renderPanel,
} from "./render.js";
import { PanelData, QuerySession, runBench, runSearch } from "./session.js";

const $ = <T extends HTMLElement>(id: string): T => {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
};

const session = new QuerySession();
let client = new Client(($("base-url") as HTMLInputElement).value);
let lastPanels: PanelData[] = [];
const POLL_MS = 1000;

function showNotices(notices: Array<{ message: string } | null>): void {
  const box = $("notices");
  box.replaceChildren();
  for (const n of notices) if (n) box.append(renderBanner(n.message));
}

function renderOutcome(panels: PanelData[], overlap: number | null): void {
  const area = $("panels");
  area.replaceChildren(...panels.map((p) => renderPanel(p)));
  const badge = $("overlap");
  badge.replaceChildren();
  if (overlap !== null) badge.append(renderOverlapBadge(overlap));
}

async function onSearch(): Promise<void> {
  const query = ($("query") as HTMLInputElement).value;
  if (!query.trim()) return;
  const outcome = await runSearch(client, session, query);
  if (outcome.stale) return; // a newer search owns the panels now
  if (outcome.banner) {
    showNotices([{ message: outcome.banner }]);
    return;
  }
  showNotices([]);
  lastPanels = outcome.panels;
  renderOutcome(outcome.panels, outcome.overlap);
  renderHistory();
}

// Re-rank the cached candidates immediately; the next server call confirms.
function onLambdaPreview(value: number): void {
  const notice = session.adjustControl("a", "lambda", value);
  showNotices([notice]);
  if (lastPanels.length === 0) return;
  const panel = lastPanels[0];
  const order = new Map(
    previewRefuse(panel.rows, session.configA.lambda).map(([id, s], i) => [id, [i, s] as const]),
  );
  const rows = panel.rows
    .filter((r) => order.has(r.item_id))
    .sort((a, b) => order.get(a.item_id)![0] - order.get(b.item_id)![0])
    .map((r, i) => ({ ...r, rank: i + 1, score: order.get(r.item_id)![1] }));
  const area = $("panels");
  area.replaceChildren(renderPanel({ ...panel, rows }, true));
  for (const other of lastPanels.slice(1)) area.append(renderPanel(other));
}

async function onBench(): Promise<void> {
  const raw = ($("bench-queries") as HTMLTextAreaElement).value;
  const queries = raw
    .split("\n")
    .map((q) => q.trim())
    .filter((q) => q.length > 0);
  const status = $("bench-status");
  const outcome = runBench(client, session, queries);
  const poll = window.setInterval(() => {
    if (session.benchBusy) status.textContent = "running…";
  }, POLL_MS);
  const done = await outcome;
  window.clearInterval(poll);
  if (done.queued) {
    status.textContent = "queued: a benchmark is already running";
    return;
  }
  if (done.banner) {
    status.textContent = "";
    showNotices([{ message: done.banner }]);
    return;
  }
  status.textContent = `overlap@10 ${done.overlap}`;
  const stats = done.stats!;
  $("bench-bars").replaceChildren(
    renderLatencyBars(
      ["A p50", "A p99", "B p50", "B p99"],
      [stats.a.p50, stats.a.p99, stats.b.p50, stats.b.p99],
    ),
    renderBanner(`A ${stats.a.qps.toFixed(1)} qps · B ${stats.b.qps.toFixed(1)} qps`),
  );
}

function renderHistory(): void {
  const list = $("history");
  list.replaceChildren();
  for (const entry of session.history) {
    const li = document.createElement("li");
    const overlap = entry.overlap === null ? "" : ` (overlap ${entry.overlap.toFixed(2)})`;
    li.textContent = `${entry.query} -> ${entry.panels
      .map((p) => `${p.label}:${p.topIds.length}`)
      .join(" ")}${overlap}`;
    list.append(li);
  }
}

function bindControls(): void {
  $("run").addEventListener("click", () => void onSearch());
  ($("query") as HTMLInputElement).addEventListener("keydown", (e) => {
    if (e.key === "Enter") void onSearch();
  });
  ($("base-url") as HTMLInputElement).addEventListener("change", (e) => {
    client = new Client((e.target as HTMLInputElement).value);
  });
  ($("k") as HTMLInputElement).addEventListener("change", (e) => {
    const notice = session.adjustControl("a", "k", Number((e.target as HTMLInputElement).value));
    (e.target as HTMLInputElement).value = String(session.k);
    showNotices([notice]);
  });
  ($("lambda") as HTMLInputElement).addEventListener("input", (e) => {
    onLambdaPreview(Number((e.target as HTMLInputElement).value));
  });
  for (const [id, control] of [
    ["mode-a", "mode"],
    ["engine-a", "engine"],
  ] as const) {
    ($(id) as HTMLSelectElement).addEventListener("change", (e) => {
      showNotices([session.adjustControl("a", control, (e.target as HTMLSelectElement).value)]);
    });
  }
  for (const [id, control] of [
    ["mode-b", "mode"],
    ["engine-b", "engine"],
    ["lambda-b", "lambda"],
  ] as const) {
    ($(id) as HTMLSelectElement).addEventListener("change", (e) => {
      showNotices([session.adjustControl("b", control, (e.target as HTMLSelectElement).value)]);
    });
  }
  ($("ab-toggle") as HTMLInputElement).addEventListener("change", (e) => {
    session.abEnabled = (e.target as HTMLInputElement).checked;
    $("config-b").style.display = session.abEnabled ? "" : "none";
  });
  ($("filter-brand") as HTMLInputElement).addEventListener("change", (e) => {
    const brand = (e.target as HTMLInputElement).value.trim();
    for (const cfg of [session.configA, session.configB]) {
      if (brand) cfg.filters = { ...cfg.filters, brand };
      else if (cfg.filters) delete cfg.filters.brand;
    }
  });
  const benchBtn = $("bench-run") as HTMLButtonElement;
  benchBtn.addEventListener("click", () => void onBench());
  ($("bench-queries") as HTMLTextAreaElement).addEventListener("input", (e) => {
    benchBtn.disabled = (e.target as HTMLTextAreaElement).value.trim().length === 0;
  });
  benchBtn.disabled = true;
}

async function init(): Promise<void> {
  bindControls();
  try {
    const health = await client.health();
    $("health").textContent = `service ok · ${health.n_items} items`;
  } catch {
    $("health").textContent = "service unreachable";
  }
}

void init();
