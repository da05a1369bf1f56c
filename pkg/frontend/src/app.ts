/** Workbench wiring: session upload, discovery jobs, and the three views.
 * All causal quantities on screen are echoes of service responses. */

import { CprismClient, ApiError } from "./api.js";
import { defaultRankingSpec, type RankingSpec } from "./ranking.js";
import { renderProjection } from "./projectionView.js";
import {
  renderSubgroupTable,
  type SubgroupTableState,
} from "./subgroupTable.js";
import {
  renderIteDotPlot,
  renderPropensityHistogram,
  renderUnitTable,
} from "./validationView.js";
import type { SessionSummary, SubgroupEntry } from "./types.js";

interface AppState {
  client: CprismClient;
  session: SessionSummary | null;
  front: SubgroupEntry[];
  spec: RankingSpec;
  table: SubgroupTableState;
  mergePick: string[];
  hideOthers: boolean;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text) node.textContent = text;
  return node;
}

function statusLine(state: AppState, message: string): void {
  const bar = document.getElementById("status");
  if (bar) bar.textContent = message;
}

async function refreshSubgroups(state: AppState): Promise<void> {
  if (!state.session) return;
  state.front = await state.client.subgroups(state.session.session_id);
  renderAll(state);
}

function numericDomains(session: SessionSummary): Map<string, { lo: number; hi: number }> {
  const domains = new Map<string, { lo: number; hi: number }>();
  for (const atom of session.atoms) {
    if (atom.op !== "in_range") continue;
    const [lo, hi] = atom.value as [number | null, number | null];
    const cur = domains.get(atom.covariate) ?? { lo: Infinity, hi: -Infinity };
    if (lo !== null && lo < cur.lo) cur.lo = lo;
    if (hi !== null && hi > cur.hi) cur.hi = hi;
    if (lo !== null || hi !== null) domains.set(atom.covariate, cur);
  }
  for (const [name, dom] of domains) {
    if (!Number.isFinite(dom.lo) || !Number.isFinite(dom.hi) || dom.hi <= dom.lo) {
      domains.delete(name);
    }
  }
  return domains;
}

function renderRankingControls(state: AppState): void {
  const panel = document.getElementById("ranking-panel");
  if (!panel) return;
  panel.textContent = "";
  for (const metric of state.spec.metrics) {
    const row = el("div", "rank-row");
    const include = el("input") as HTMLInputElement;
    include.type = "checkbox";
    include.checked = metric.include;
    include.addEventListener("change", () => {
      metric.include = include.checked;
      renderAll(state);
    });
    const weight = el("input") as HTMLInputElement;
    weight.type = "number";
    weight.min = "0";
    weight.step = "0.1";
    weight.value = String(metric.weight);
    weight.addEventListener("change", () => {
      metric.weight = Number(weight.value);
      renderAll(state);
    });
    const invert = el("input") as HTMLInputElement;
    invert.type = "checkbox";
    invert.checked = metric.invert;
    invert.addEventListener("change", () => {
      metric.invert = invert.checked;
      renderAll(state);
    });
    row.append(
      include,
      el("span", "rank-name", metric.key),
      el("span", undefined, " w:"),
      weight,
      el("span", undefined, " invert:"),
      invert,
    );
    panel.appendChild(row);
  }
  const filterRow = el("div", "rank-row");
  const filterInput = el("input") as HTMLInputElement;
  filterInput.type = "number";
  filterInput.placeholder = "min coverage";
  filterInput.addEventListener("change", () => {
    state.spec.filters = filterInput.value
      ? [{ key: "coverage", op: ">=", value: Number(filterInput.value) }]
      : [];
    renderAll(state);
  });
  filterRow.append(el("span", undefined, "coverage >= "), filterInput);
  panel.appendChild(filterRow);
}

async function showValidation(state: AppState, entry: SubgroupEntry): Promise<void> {
  if (!state.session) return;
  const sid = state.session.session_id;
  try {
    const report = await state.client.match(sid, entry.id);
    const units = await state.client.units(sid, entry.id, 200);
    const histBox = document.getElementById("histogram");
    const dotBox = document.getElementById("dot-plot");
    const unitBox = document.getElementById("unit-table");
    if (!histBox || !dotBox || !unitBox) return;
    const covariateNames = state.session.covariates.map((c) => c.name);
    renderPropensityHistogram(histBox, report);
    renderIteDotPlot(dotBox, report, {
      onPairClick: (pairIndex) =>
        renderUnitTable(unitBox, units.units, covariateNames, pairIndex),
    });
    renderUnitTable(unitBox, units.units, covariateNames);
  } catch (err) {
    statusLine(state, err instanceof ApiError ? err.message : String(err));
  }
}

async function showProjection(state: AppState): Promise<void> {
  if (!state.session) return;
  const box = document.getElementById("projection");
  if (!box) return;
  const doc = await state.client.projection(state.session.session_id);
  renderProjection(box, doc, state.table.selectedId, state.hideOthers, {
    onToggleHide: (hide) => {
      state.hideOthers = hide;
      void showProjection(state);
    },
    onMerge: async () => {
      if (state.mergePick.length !== 2 || !state.session) return;
      await state.client.merge(state.session.session_id, state.mergePick[0], state.mergePick[1]);
      state.mergePick = [];
      await refreshSubgroups(state);
    },
    onSplit: async () => {
      if (!state.table.selectedId || !state.session) return;
      const covariate = window.prompt("split on covariate:");
      if (!covariate) return;
      await state.client.split(state.session.session_id, state.table.selectedId, covariate);
      await refreshSubgroups(state);
    },
  });
}

function renderAll(state: AppState): void {
  const tableBox = document.getElementById("subgroup-table");
  if (!tableBox || !state.session) return;
  renderSubgroupTable(tableBox, state.front, state.session.covariates, state.spec, state.table, {
    onSelect: (entry) => {
      state.table.selectedId = entry.id;
      if (state.mergePick.includes(entry.id)) {
        state.mergePick = state.mergePick.filter((x) => x !== entry.id);
      } else {
        state.mergePick = [...state.mergePick.slice(-1), entry.id];
      }
      renderAll(state);
      void showValidation(state, entry);
      void showProjection(state);
    },
    onExpandCovariate: (name) => state.client.distribution(state.session!.session_id, name),
    onAddSubgroup: () => openSubgroupDialog(state),
  });
}

function openSubgroupDialog(state: AppState): void {
  if (!state.session) return;
  const dialog = el("div", "subgroup-dialog");
  const textarea = el("textarea") as HTMLTextAreaElement;
  textarea.rows = 8;
  textarea.cols = 48;
  textarea.value = JSON.stringify(
    {
      id: "my-subgroup",
      origin: "user-defined",
      atoms: [{ covariate: state.session.covariates[0]?.name ?? "", op: "eq", value: "" }],
    },
    null,
    2,
  );
  const submit = el("button", "dialog-submit", "Evaluate");
  submit.addEventListener("click", async () => {
    try {
      const doc = JSON.parse(textarea.value);
      await state.client.addSubgroup(state.session!.session_id, doc);
      dialog.remove();
      await refreshSubgroups(state);
    } catch (err) {
      statusLine(state, err instanceof ApiError ? err.message : String(err));
    }
  });
  const cancel = el("button", "dialog-cancel", "Cancel");
  cancel.addEventListener("click", () => dialog.remove());
  dialog.append(textarea, submit, cancel);
  document.body.appendChild(dialog);
}

export function bootstrap(base = ""): void {
  const state: AppState = {
    client: new CprismClient(base),
    session: null,
    front: [],
    spec: defaultRankingSpec(),
    table: { numericDomains: new Map(), expanded: new Set(), selectedId: null },
    mergePick: [],
    hideOthers: false,
  };

  const uploadForm = document.getElementById("upload-form") as HTMLFormElement | null;
  uploadForm?.addEventListener("submit", async (event) => {
    event.preventDefault();
    const fileInput = document.getElementById("csv-file") as HTMLInputElement;
    const treatment = (document.getElementById("treatment-col") as HTMLInputElement).value;
    const outcome = (document.getElementById("outcome-col") as HTMLInputElement).value;
    const file = fileInput.files?.[0];
    if (!file) return;
    try {
      state.session = await state.client.createSession(file, { treatment, outcome });
      state.table.numericDomains = numericDomains(state.session);
      statusLine(state, `session ${state.session.session_id}: n=${state.session.n}`);
      renderRankingControls(state);
      await refreshSubgroups(state);
    } catch (err) {
      statusLine(state, err instanceof ApiError ? err.message : String(err));
    }
  });

  const discoverButton = document.getElementById("discover-button");
  discoverButton?.addEventListener("click", async () => {
    if (!state.session) return;
    const sid = state.session.session_id;
    try {
      const { job_id } = await state.client.startDiscovery(sid, {
        min_coverage: (document.getElementById("min-coverage") as HTMLInputElement).value || "5%",
        max_length: Number(
          (document.getElementById("max-length") as HTMLInputElement).value || 7,
        ),
        seed: 42,
      });
      const status = await state.client.waitForJob(sid, job_id, (generation) =>
        statusLine(state, `discovering... generation ${generation}`),
      );
      statusLine(state, `discovery ${status.status}`);
      await refreshSubgroups(state);
    } catch (err) {
      statusLine(state, err instanceof ApiError ? err.message : String(err));
    }
  });
}

declare global {
  interface Window {
    cprismBootstrap: typeof bootstrap;
  }
}

if (typeof window !== "undefined") {
  window.cprismBootstrap = bootstrap;
}
