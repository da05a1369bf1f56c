/** Multi-attribute ranking model for the subgroup table.
 *
 * Bars and the combined stacked column are presentation-side arithmetic over
 * service-provided metrics: each included metric is min-max normalized over
 * the current front, inverted metrics (smaller is better) map to
 * 1 - normalized, and the combined score is the weight-normalized sum.
 * Ordering is deterministic: ties break on subgroup id.
 */

import type { Metrics, SubgroupEntry } from "./types.js";

export type MetricKey = keyof Metrics;

export interface MetricSpec {
  key: MetricKey;
  include: boolean;
  weight: number;
  invert: boolean;
}

export interface FilterPredicate {
  key: MetricKey;
  op: ">=" | "<=" | ">" | "<";
  value: number;
}

export interface RankingSpec {
  metrics: MetricSpec[];
  sortBy: "combined" | MetricKey;
  descending: boolean;
  filters: FilterPredicate[];
}

export function defaultRankingSpec(): RankingSpec {
  return {
    metrics: [
      { key: "tau", include: true, weight: 1, invert: false },
      { key: "var0", include: false, weight: 1, invert: true },
      { key: "var1", include: false, weight: 1, invert: true },
      { key: "coverage", include: false, weight: 1, invert: false },
      { key: "length", include: false, weight: 1, invert: true },
    ],
    sortBy: "combined",
    descending: true,
    filters: [],
  };
}

/** Weights over included metrics, rescaled to sum to 1. */
export function normalizedWeights(spec: RankingSpec): Map<MetricKey, number> {
  const included = spec.metrics.filter((m) => m.include);
  const total = included.reduce((acc, m) => acc + m.weight, 0);
  const out = new Map<MetricKey, number>();
  for (const m of included) {
    out.set(m.key, total > 0 ? m.weight / total : 1 / included.length);
  }
  return out;
}

export interface Extent {
  min: number;
  max: number;
}

/** Min-max extents of every metric over the current front. */
export function metricExtents(front: SubgroupEntry[]): Map<MetricKey, Extent> {
  const out = new Map<MetricKey, Extent>();
  if (front.length === 0) return out;
  const keys = Object.keys(front[0].metrics) as MetricKey[];
  for (const key of keys) {
    let min = Infinity;
    let max = -Infinity;
    for (const entry of front) {
      const v = entry.metrics[key];
      if (v < min) min = v;
      if (v > max) max = v;
    }
    out.set(key, { min, max });
  }
  return out;
}

/** Normalized value in [0, 1]; a zero-range metric maps to 0.5 for all. */
export function normalizedValue(value: number, extent: Extent): number {
  const span = extent.max - extent.min;
  if (span <= 0) return 0.5;
  return (value - extent.min) / span;
}

/** Length of a metric's bar; inverting maps smaller-is-better to longer. */
export function barLength(value: number, extent: Extent, invert: boolean): number {
  const normalized = normalizedValue(value, extent);
  return invert ? 1 - normalized : normalized;
}

export function combinedScore(
  entry: SubgroupEntry,
  spec: RankingSpec,
  extents: Map<MetricKey, Extent>,
): number {
  const weights = normalizedWeights(spec);
  let score = 0;
  for (const m of spec.metrics) {
    if (!m.include) continue;
    const extent = extents.get(m.key);
    if (!extent) continue;
    score += (weights.get(m.key) ?? 0) * barLength(entry.metrics[m.key], extent, m.invert);
  }
  return score;
}

/** Per-metric stacked-bar segments of the combined column, in spec order. */
export function combinedSegments(
  entry: SubgroupEntry,
  spec: RankingSpec,
  extents: Map<MetricKey, Extent>,
): { key: MetricKey; width: number }[] {
  const weights = normalizedWeights(spec);
  const segments: { key: MetricKey; width: number }[] = [];
  for (const m of spec.metrics) {
    if (!m.include) continue;
    const extent = extents.get(m.key);
    if (!extent) continue;
    segments.push({
      key: m.key,
      width: (weights.get(m.key) ?? 0) * barLength(entry.metrics[m.key], extent, m.invert),
    });
  }
  return segments;
}

export function passesFilters(entry: SubgroupEntry, filters: FilterPredicate[]): boolean {
  for (const f of filters) {
    const v = entry.metrics[f.key];
    if (f.op === ">=" && !(v >= f.value)) return false;
    if (f.op === "<=" && !(v <= f.value)) return false;
    if (f.op === ">" && !(v > f.value)) return false;
    if (f.op === "<" && !(v < f.value)) return false;
  }
  return true;
}

/** Filter and order the front; stable with an id tie-break. */
export function rankSubgroups(front: SubgroupEntry[], spec: RankingSpec): SubgroupEntry[] {
  const extents = metricExtents(front);
  const kept = front.filter((entry) => passesFilters(entry, spec.filters));
  const keyed = kept.map((entry) => ({
    entry,
    value:
      spec.sortBy === "combined"
        ? combinedScore(entry, spec, extents)
        : entry.metrics[spec.sortBy],
  }));
  keyed.sort((a, b) => {
    const diff = spec.descending ? b.value - a.value : a.value - b.value;
    if (diff !== 0) return diff;
    return a.entry.id < b.entry.id ? -1 : a.entry.id > b.entry.id ? 1 : 0;
  });
  return keyed.map((k) => k.entry);
}
