/** Wire types mirroring the service's JSON contracts. */

export interface CovariateInfo {
  name: string;
  kind: "categorical" | "numerical";
}

export interface AtomClause {
  covariate: string;
  op: "eq" | "in_range";
  value: string | [number | null, number | null];
}

export interface Metrics {
  tau: number;
  var0: number;
  var1: number;
  coverage: number;
  coverage_pct: number;
  length: number;
  n_treated: number;
  n_control: number;
}

export interface SubgroupEntry {
  id: string;
  origin: string;
  label: string | null;
  atoms: AtomClause[];
  metrics: Metrics;
  objectives: (number | null)[] | null;
  crowding: number | null;
  front: number | null;
  snapped?: string[];
}

export interface SessionSummary {
  session_id: string;
  n: number;
  covariates: CovariateInfo[];
  atoms: AtomClause[];
  treatment: string;
  outcome: string;
}

export interface MatchedPairWire {
  t: number;
  c: number;
  ite: number;
  gap: number;
}

export interface HistBin {
  lo: number;
  hi: number;
  t_count: number;
  c_count: number;
}

export interface MatchReport {
  pairs: MatchedPairWire[];
  mean_ite: number;
  ci95: [number, number];
  hist: HistBin[];
  n_treated: number;
  n_control: number;
  n_pairs: number;
  sampled_pairs: MatchedPairWire[];
}

export interface UnitRow {
  id: number;
  e: number;
  t: number;
  y: number;
  pair: number;
  covariates: Record<string, string | number>;
}

export interface LayoutPoint {
  id: number;
  x: number;
  y: number;
  subgroups: string[];
}

export interface ProjectionDoc {
  points: LayoutPoint[];
  stress: number;
}

export interface CategoricalDistribution {
  name: string;
  kind: "categorical";
  counts: { value: string; count: number }[];
}

export interface NumericalDistribution {
  name: string;
  kind: "numerical";
  bins: { lo: number; hi: number; count: number }[];
}

export type Distribution = CategoricalDistribution | NumericalDistribution;

export interface JobStatus {
  status: "running" | "done" | "cancelled" | "failed";
  generation: number;
  front?: SubgroupEntry[];
  error?: string;
}

export interface SearchParamsDoc {
  population?: number;
  generations?: number;
  min_coverage?: number | string;
  max_length?: number;
  min_group?: number;
  seed?: number;
  objectives?: string[];
}
