/** Causal Subgroup View: subgroups as rows, covariates and metrics as
 * columns. Covariate cells draw discrete value sets as circles and numeric
 * intervals as rectangles; metric cells draw horizontal bars; the combined
 * column stacks weighted normalized segments. Sorting and filtering happen
 * client-side through the ranking model. */

import {
  barLength,
  combinedSegments,
  metricExtents,
  rankSubgroups,
  type MetricKey,
  type RankingSpec,
} from "./ranking.js";
import type { AtomClause, CovariateInfo, Distribution, SubgroupEntry } from "./types.js";

const SVG_NS = "http://www.w3.org/2000/svg";

const METRIC_COLORS: Record<string, string> = {
  tau: "#e07a2f",
  var0: "#5b8fc9",
  var1: "#7fb069",
  coverage: "#b085c9",
  length: "#c9b458",
};

export interface TableHandlers {
  onSelect?: (entry: SubgroupEntry) => void;
  onExpandCovariate?: (name: string) => Promise<Distribution>;
  onAddSubgroup?: () => void;
  onEditSubgroup?: (entry: SubgroupEntry) => void;
}

interface IntervalBounds {
  lo: number | null;
  hi: number | null;
}

function clauseBounds(clause: AtomClause): IntervalBounds {
  const [lo, hi] = clause.value as [number | null, number | null];
  return { lo, hi };
}

/** Merge the selected atoms of one covariate into display primitives:
 * categorical values stay discrete, touching intervals fuse. */
export function cellPrimitives(
  atoms: AtomClause[],
  covariate: string,
): { values: string[]; intervals: IntervalBounds[] } {
  const values: string[] = [];
  const intervals: IntervalBounds[] = [];
  for (const clause of atoms) {
    if (clause.covariate !== covariate) continue;
    if (clause.op === "eq") {
      values.push(String(clause.value));
      continue;
    }
    const { lo, hi } = clauseBounds(clause);
    const last = intervals[intervals.length - 1];
    if (last && last.hi !== null && lo !== null && last.hi === lo) {
      last.hi = hi; // contiguous buckets render as one rectangle
    } else {
      intervals.push({ lo, hi });
    }
  }
  return { values, intervals };
}

function covariateCellSvg(
  entry: SubgroupEntry,
  cov: CovariateInfo,
  domain: { lo: number; hi: number } | null,
): SVGSVGElement {
  const svg = document.createElementNS(SVG_NS, "svg");
  svg.setAttribute("width", "120");
  svg.setAttribute("height", "18");
  svg.classList.add("cell");
  const { values, intervals } = cellPrimitives(entry.atoms, cov.name);
  values.forEach((value, i) => {
    const circle = document.createElementNS(SVG_NS, "circle");
    circle.setAttribute("cx", String(10 + i * 14));
    circle.setAttribute("cy", "9");
    circle.setAttribute("r", "5");
    circle.classList.add("value-dot");
    const title = document.createElementNS(SVG_NS, "title");
    title.textContent = `${cov.name}=${value}`;
    circle.appendChild(title);
    svg.appendChild(circle);
  });
  for (const interval of intervals) {
    const rect = document.createElementNS(SVG_NS, "rect");
    const lo = interval.lo;
    const hi = interval.hi;
    let x = 0;
    let width = 120;
    if (domain && domain.hi > domain.lo) {
      const span = domain.hi - domain.lo;
      const left = lo === null ? domain.lo : Math.max(domain.lo, lo);
      const right = hi === null ? domain.hi : Math.min(domain.hi, hi);
      x = ((left - domain.lo) / span) * 120;
      width = Math.max(3, ((right - left) / span) * 120);
    }
    rect.setAttribute("x", String(x));
    rect.setAttribute("y", "5");
    rect.setAttribute("width", String(width));
    rect.setAttribute("height", "8");
    rect.classList.add("interval-rect");
    const title = document.createElementNS(SVG_NS, "title");
    title.textContent = `${lo ?? "-inf"} < ${cov.name} <= ${hi ?? "+inf"}`;
    rect.appendChild(title);
    svg.appendChild(rect);
  }
  return svg;
}

export function metricBar(
  key: MetricKey,
  value: number,
  extent: { min: number; max: number },
  invert: boolean,
): HTMLElement {
  const wrap = document.createElement("div");
  wrap.className = "metric-bar";
  const fill = document.createElement("div");
  fill.className = "metric-bar-fill";
  fill.style.width = `${(100 * barLength(value, extent, invert)).toFixed(1)}%`;
  fill.style.background = METRIC_COLORS[key] ?? "#999";
  fill.dataset.metric = key;
  fill.dataset.value = String(value);
  wrap.appendChild(fill);
  const label = document.createElement("span");
  label.className = "metric-label";
  label.textContent = Number.isInteger(value) ? String(value) : value.toFixed(3);
  wrap.appendChild(label);
  return wrap;
}

function combinedBar(
  entry: SubgroupEntry,
  spec: RankingSpec,
  extents: ReturnType<typeof metricExtents>,
): HTMLElement {
  const wrap = document.createElement("div");
  wrap.className = "combined-bar";
  for (const segment of combinedSegments(entry, spec, extents)) {
    const piece = document.createElement("div");
    piece.className = "combined-segment";
    piece.style.width = `${(100 * segment.width).toFixed(1)}%`;
    piece.style.background = METRIC_COLORS[segment.key] ?? "#999";
    piece.dataset.metric = segment.key;
    wrap.appendChild(piece);
  }
  return wrap;
}

function distributionChart(dist: Distribution): SVGSVGElement {
  const svg = document.createElementNS(SVG_NS, "svg");
  svg.setAttribute("width", "120");
  svg.setAttribute("height", "42");
  svg.classList.add("distribution");
  if (dist.kind === "categorical") {
    const max = Math.max(...dist.counts.map((c) => c.count), 1);
    const width = 120 / Math.max(dist.counts.length, 1);
    dist.counts.forEach((item, i) => {
      const bar = document.createElementNS(SVG_NS, "rect");
      const h = (item.count / max) * 38;
      bar.setAttribute("x", String(i * width + 1));
      bar.setAttribute("y", String(40 - h));
      bar.setAttribute("width", String(Math.max(width - 2, 1)));
      bar.setAttribute("height", String(h));
      bar.classList.add("dist-bar");
      const title = document.createElementNS(SVG_NS, "title");
      title.textContent = `${item.value}: ${item.count}`;
      bar.appendChild(title);
      svg.appendChild(bar);
    });
    return svg;
  }
  const max = Math.max(...dist.bins.map((b) => b.count), 1);
  const points = dist.bins.map((bin, i) => {
    const x = (i / Math.max(dist.bins.length - 1, 1)) * 118 + 1;
    const y = 40 - (bin.count / max) * 38;
    return `${x.toFixed(1)},${y.toFixed(1)}`;
  });
  const line = document.createElementNS(SVG_NS, "polyline");
  line.setAttribute("points", points.join(" "));
  line.setAttribute("fill", "none");
  line.classList.add("dist-line");
  svg.appendChild(line);
  return svg;
}

export interface SubgroupTableState {
  numericDomains: Map<string, { lo: number; hi: number }>;
  expanded: Set<string>;
  selectedId: string | null;
}

export function renderSubgroupTable(
  container: HTMLElement,
  front: SubgroupEntry[],
  covariates: CovariateInfo[],
  spec: RankingSpec,
  state: SubgroupTableState,
  handlers: TableHandlers = {},
): void {
  container.textContent = "";
  const toolbar = document.createElement("div");
  toolbar.className = "table-toolbar";
  const addButton = document.createElement("button");
  addButton.textContent = "Add Subgroup";
  addButton.className = "add-subgroup";
  addButton.addEventListener("click", () => handlers.onAddSubgroup?.());
  toolbar.appendChild(addButton);
  container.appendChild(toolbar);

  const ranked = rankSubgroups(front, spec);
  const extents = metricExtents(front);
  const metricKeys = spec.metrics.map((m) => m.key);

  const table = document.createElement("table");
  table.className = "subgroup-table";
  const head = table.createTHead().insertRow();
  for (const text of ["subgroup", ...covariates.map((c) => c.name), ...metricKeys, "combined"]) {
    const th = document.createElement("th");
    th.textContent = text;
    if (covariates.some((c) => c.name === text)) {
      th.classList.add("covariate-header");
      th.addEventListener("click", async () => {
        if (!handlers.onExpandCovariate) return;
        const dist = await handlers.onExpandCovariate(text);
        const holder = table.querySelectorAll(`td[data-dist="${text}"]`);
        holder.forEach((cell) => {
          cell.textContent = "";
          cell.appendChild(distributionChart(dist));
        });
      });
    }
    head.appendChild(th);
  }

  const body = table.createTBody();
  // header-adjacent row reserved for expanded covariate distributions
  const distRow = body.insertRow();
  distRow.className = "distribution-row";
  distRow.insertCell();
  for (const cov of covariates) {
    const cell = distRow.insertCell();
    cell.dataset.dist = cov.name;
  }
  for (let i = 0; i < metricKeys.length + 1; i += 1) distRow.insertCell();

  for (const entry of ranked) {
    const row = body.insertRow();
    row.dataset.id = entry.id;
    if (entry.id === state.selectedId) row.classList.add("selected");
    row.addEventListener("click", () => handlers.onSelect?.(entry));
    row.addEventListener("dblclick", () => handlers.onEditSubgroup?.(entry));
    const idCell = row.insertCell();
    idCell.textContent = entry.label ?? entry.id;
    idCell.className = "subgroup-id";
    for (const cov of covariates) {
      const cell = row.insertCell();
      cell.appendChild(
        covariateCellSvg(entry, cov, state.numericDomains.get(cov.name) ?? null),
      );
    }
    for (const m of spec.metrics) {
      const cell = row.insertCell();
      const extent = extents.get(m.key);
      if (extent) cell.appendChild(metricBar(m.key, entry.metrics[m.key], extent, m.invert));
    }
    row.insertCell().appendChild(combinedBar(entry, spec, extents));
  }
  container.appendChild(table);
}
