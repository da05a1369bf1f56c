/** Covariate Projection View: the 2-D unit scatter with the selected
 * subgroup highlighted, a toggle hiding non-member units, and merge/split
 * controls that call back into the service. */

import type { LayoutPoint, ProjectionDoc } from "./types.js";

const SVG_NS = "http://www.w3.org/2000/svg";

export interface ProjectionHandlers {
  onMerge?: () => void;
  onSplit?: () => void;
  onToggleHide?: (hide: boolean) => void;
}

export function renderProjection(
  container: HTMLElement,
  doc: ProjectionDoc,
  selectedSubgroup: string | null,
  hideOthers: boolean,
  handlers: ProjectionHandlers = {},
  size = 420,
): void {
  container.textContent = "";
  const toolbar = document.createElement("div");
  toolbar.className = "projection-toolbar";
  const mergeButton = document.createElement("button");
  mergeButton.textContent = "Merge subgroups";
  mergeButton.className = "merge-button";
  mergeButton.addEventListener("click", () => handlers.onMerge?.());
  const splitButton = document.createElement("button");
  splitButton.textContent = "Split subgroup";
  splitButton.className = "split-button";
  splitButton.addEventListener("click", () => handlers.onSplit?.());
  const hideLabel = document.createElement("label");
  const hideToggle = document.createElement("input");
  hideToggle.type = "checkbox";
  hideToggle.checked = hideOthers;
  hideToggle.className = "hide-toggle";
  hideToggle.addEventListener("change", () => handlers.onToggleHide?.(hideToggle.checked));
  hideLabel.append(hideToggle, document.createTextNode(" hide other units"));
  const stress = document.createElement("span");
  stress.className = "stress-label";
  stress.textContent = `stress ${doc.stress.toFixed(3)}`;
  toolbar.append(mergeButton, splitButton, hideLabel, stress);
  container.appendChild(toolbar);

  const xs = doc.points.map((p) => p.x);
  const ys = doc.points.map((p) => p.y);
  const xLo = Math.min(...xs);
  const xHi = Math.max(...xs);
  const yLo = Math.min(...ys);
  const yHi = Math.max(...ys);
  const pad = 10;
  const sx = (v: number) => pad + ((v - xLo) / (xHi - xLo || 1)) * (size - 2 * pad);
  const sy = (v: number) => pad + ((v - yLo) / (yHi - yLo || 1)) * (size - 2 * pad);

  const svg = document.createElementNS(SVG_NS, "svg");
  svg.setAttribute("width", String(size));
  svg.setAttribute("height", String(size));
  svg.classList.add("projection-scatter");
  for (const point of doc.points) {
    const member = selectedSubgroup !== null && point.subgroups.includes(selectedSubgroup);
    if (hideOthers && !member) continue;
    const dot = document.createElementNS(SVG_NS, "circle");
    dot.setAttribute("cx", sx(point.x).toFixed(1));
    dot.setAttribute("cy", sy(point.y).toFixed(1));
    dot.setAttribute("r", member ? "4" : "2.5");
    dot.classList.add("unit-dot");
    if (member) dot.classList.add("member");
    dot.dataset.id = String(point.id);
    svg.appendChild(dot);
  }
  container.appendChild(svg);
}

export function membersOf(points: LayoutPoint[], subgroupId: string): number[] {
  return points.filter((p) => p.subgroups.includes(subgroupId)).map((p) => p.id);
}
