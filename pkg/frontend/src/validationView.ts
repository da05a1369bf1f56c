/** Treatment Effect Validation View: propensity histogram for both arms
 * (overlap = min of the two), a dot plot of sampled matched-pair effects
 * with mean line and confidence band, and the matched-unit detail table.
 * Clicking a dot highlights that pair's rows in the table. */

import type { HistBin, MatchReport, UnitRow } from "./types.js";

const SVG_NS = "http://www.w3.org/2000/svg";

export function renderPropensityHistogram(
  container: HTMLElement,
  report: MatchReport,
  width = 420,
  height = 140,
): void {
  container.textContent = "";
  const caption = document.createElement("div");
  caption.className = "hist-caption";
  caption.textContent =
    `treated ${report.n_treated} | control ${report.n_control} | matched pairs ${report.n_pairs}`;
  container.appendChild(caption);

  const svg = document.createElementNS(SVG_NS, "svg");
  svg.setAttribute("width", String(width));
  svg.setAttribute("height", String(height));
  svg.classList.add("propensity-histogram");
  const maxCount = Math.max(...report.hist.map((b: HistBin) => Math.max(b.t_count, b.c_count)), 1);
  const binWidth = width / report.hist.length;
  report.hist.forEach((bin, i) => {
    const entries: [string, number][] = [
      ["treated", bin.t_count],
      ["control", bin.c_count],
      ["overlap", Math.min(bin.t_count, bin.c_count)],
    ];
    for (const [cls, count] of entries) {
      if (count === 0) continue;
      const h = (count / maxCount) * (height - 18);
      const rect = document.createElementNS(SVG_NS, "rect");
      rect.setAttribute("x", String(i * binWidth + 1));
      rect.setAttribute("y", String(height - h));
      rect.setAttribute("width", String(Math.max(binWidth - 2, 1)));
      rect.setAttribute("height", String(h));
      rect.classList.add(`hist-${cls}`);
      rect.dataset.lo = String(bin.lo);
      rect.dataset.count = String(count);
      svg.appendChild(rect);
    }
  });
  container.appendChild(svg);
}

export interface DotPlotHandlers {
  onPairClick?: (pairIndex: number) => void;
}

export function renderIteDotPlot(
  container: HTMLElement,
  report: MatchReport,
  handlers: DotPlotHandlers = {},
  width = 420,
  height = 120,
): void {
  container.textContent = "";
  const svg = document.createElementNS(SVG_NS, "svg");
  svg.setAttribute("width", String(width));
  svg.setAttribute("height", String(height));
  svg.classList.add("ite-dot-plot");
  const pairs = report.sampled_pairs ?? report.pairs;
  const ites = pairs.map((p) => p.ite);
  const lo = Math.min(...ites, report.ci95[0], 0);
  const hi = Math.max(...ites, report.ci95[1], 0);
  const span = hi - lo || 1;
  const toX = (v: number) => 8 + ((v - lo) / span) * (width - 16);

  // confidence band under the axis
  const band = document.createElementNS(SVG_NS, "rect");
  band.setAttribute("x", String(toX(report.ci95[0])));
  band.setAttribute("y", String(height - 14));
  band.setAttribute("width", String(Math.max(toX(report.ci95[1]) - toX(report.ci95[0]), 1)));
  band.setAttribute("height", "10");
  band.classList.add("ci-band");
  svg.appendChild(band);

  // mean line
  const mean = document.createElementNS(SVG_NS, "line");
  mean.setAttribute("x1", String(toX(report.mean_ite)));
  mean.setAttribute("x2", String(toX(report.mean_ite)));
  mean.setAttribute("y1", "4");
  mean.setAttribute("y2", String(height - 16));
  mean.classList.add("mean-line");
  svg.appendChild(mean);

  // dots, binned into lanes so stacks stay readable
  const laneCounts = new Map<number, number>();
  pairs.forEach((pair, index) => {
    const slot = Math.round(toX(pair.ite) / 8);
    const lane = laneCounts.get(slot) ?? 0;
    laneCounts.set(slot, lane + 1);
    const dot = document.createElementNS(SVG_NS, "circle");
    dot.setAttribute("cx", String(toX(pair.ite)));
    dot.setAttribute("cy", String(height - 22 - lane * 7));
    dot.setAttribute("r", "3");
    dot.classList.add("ite-dot");
    dot.dataset.pair = String(index);
    dot.dataset.t = String(pair.t);
    dot.dataset.c = String(pair.c);
    dot.addEventListener("click", () => handlers.onPairClick?.(index));
    svg.appendChild(dot);
  });
  container.appendChild(svg);
}

export function renderUnitTable(
  container: HTMLElement,
  rows: UnitRow[],
  covariateNames: string[],
  highlightedPair: number | null = null,
): void {
  container.textContent = "";
  const table = document.createElement("table");
  table.className = "unit-table";
  const head = table.createTHead().insertRow();
  for (const text of ["id", "e", "T", "Y", ...covariateNames]) {
    const th = document.createElement("th");
    th.textContent = text;
    head.appendChild(th);
  }
  const body = table.createTBody();
  for (const row of rows) {
    const tr = body.insertRow();
    tr.dataset.pair = String(row.pair);
    tr.dataset.id = String(row.id);
    if (row.pair === highlightedPair) tr.classList.add("highlighted");
    tr.insertCell().textContent = String(row.id);
    tr.insertCell().textContent = row.e.toFixed(3);
    tr.insertCell().textContent = String(row.t);
    tr.insertCell().textContent = String(row.y);
    for (const name of covariateNames) {
      const value = row.covariates[name];
      tr.insertCell().textContent =
        typeof value === "number" && !Number.isInteger(value) ? value.toFixed(3) : String(value);
    }
  }
  container.appendChild(table);
}
