"""Synthetic observational data with known ground truth, plus benchmark
metrics against an exhaustive Pareto oracle.

The generator draws categorical covariates uniformly over small alphabets and
numericals from a standard normal, assigns treatment by a logistic model on
the covariates (confounded unless the coefficients are zero), and emits

    Y = baseline(X) + TE(X) * T + Normal(0, noise_sd)

where TE(X) equals ``planted_effect`` inside the planted rule and
``background_effect`` elsewhere. Per-unit true propensities, true effects,
baseline values, and planted membership are retained so tests can use them as
oracles. This generation family is a reconstruction: every coefficient is
exposed on the spec object.
"""

from __future__ import annotations

import itertools
import math
import string
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .dataset import (
    CATEGORICAL,
    NUMERICAL,
    BinaryAtomMatrix,
    CovariateSpec,
    CprismError,
    ObservationalDataset,
    Subgroup,
)
from .discovery import (
    OBJECTIVE_FNS,
    DEFAULT_OBJECTIVES,
    RankedSubgroup,
    dominates,
    non_dominated_sort,
)
from .estimators import (
    DEFAULT_MIN_GROUP,
    PropensityModel,
    SubgroupMetrics,
    ipw_weights,
)
from . import kernels


class SynthError(CprismError):
    pass


@dataclass(frozen=True)
class RuleClause:
    """One planted-rule condition on a raw covariate: a value set for
    categoricals or a half-open (lo, hi] interval for numericals."""

    covariate: str
    values: Optional[tuple[str, ...]] = None
    lo: Optional[float] = None
    hi: Optional[float] = None

    def matches(self, column: np.ndarray) -> np.ndarray:
        if self.values is not None:
            return np.isin(column, np.array(self.values, dtype=object))
        lo = -math.inf if self.lo is None else self.lo
        hi = math.inf if self.hi is None else self.hi
        vals = column.astype(np.float64)
        return (vals > lo) & (vals <= hi)


@dataclass
class SynthSpec:
    n: int = 3000
    n_categorical: int = 5
    n_numerical: int = 5
    n_levels: int = 3
    planted_rule: tuple[RuleClause, ...] = (RuleClause(covariate="num_0", lo=0.43, hi=None),)
    planted_effect: float = 5.0
    background_effect: float = 0.0
    noise_sd: float = 1.0
    treatment_coeffs: Optional[Sequence[float]] = None  # None -> all zero (RCT mode)
    baseline_coeffs: Optional[Sequence[float]] = None  # None -> all zero
    treatment_intercept: float = 0.0
    seed: int = 0

    def validate(self) -> None:
        if self.n < 100:
            raise SynthError("n must be >= 100")
        if not self.planted_rule:
            raise SynthError("planted rule must be non-empty")
        if self.noise_sd < 0:
            raise SynthError("noise_sd must be >= 0")
        if self.n_levels < 2:
            raise SynthError("categorical alphabets need >= 2 levels")
        k = self.n_categorical + self.n_numerical
        for name, coeffs in (
            ("treatment_coeffs", self.treatment_coeffs),
            ("baseline_coeffs", self.baseline_coeffs),
        ):
            if coeffs is not None and len(coeffs) != k:
                raise SynthError(f"{name} must have length {k}")

    @classmethod
    def from_json(cls, data: dict) -> "SynthSpec":
        clauses = []
        for raw in data.get("planted_rule", []):
            clauses.append(
                RuleClause(
                    covariate=raw["covariate"],
                    values=tuple(raw["values"]) if raw.get("values") else None,
                    lo=raw.get("lo"),
                    hi=raw.get("hi"),
                )
            )
        kwargs = {k: v for k, v in data.items() if k != "planted_rule"}
        if clauses:
            kwargs["planted_rule"] = tuple(clauses)
        if kwargs.get("treatment_coeffs") is not None:
            kwargs["treatment_coeffs"] = tuple(kwargs["treatment_coeffs"])
        if kwargs.get("baseline_coeffs") is not None:
            kwargs["baseline_coeffs"] = tuple(kwargs["baseline_coeffs"])
        return cls(**kwargs)


@dataclass
class GroundTruth:
    true_e: np.ndarray
    true_te: np.ndarray
    membership: np.ndarray
    baseline: np.ndarray


def _cat_name(i: int) -> str:
    return f"cat_{i}"


def _num_name(i: int) -> str:
    return f"num_{i}"


def generate_synthetic(spec: SynthSpec) -> tuple[ObservationalDataset, GroundTruth]:
    """Draw one dataset; deterministic under ``spec.seed``."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    n = spec.n
    levels = list(string.ascii_uppercase[: spec.n_levels])
    schema: list[CovariateSpec] = []
    columns: dict[str, np.ndarray] = {}
    features = []  # centered numeric encoding, one per covariate
    for i in range(spec.n_categorical):
        codes = rng.integers(0, spec.n_levels, size=n)
        col = np.array([levels[c] for c in codes], dtype=object)
        name = _cat_name(i)
        schema.append(CovariateSpec(name=name, kind=CATEGORICAL))
        columns[name] = col
        features.append(codes.astype(np.float64) - (spec.n_levels - 1) / 2.0)
    for i in range(spec.n_numerical):
        vals = rng.standard_normal(n)
        name = _num_name(i)
        schema.append(CovariateSpec(name=name, kind=NUMERICAL))
        columns[name] = vals
        features.append(vals)
    Z = np.column_stack(features)

    k = spec.n_categorical + spec.n_numerical
    t_coef = np.zeros(k) if spec.treatment_coeffs is None else np.asarray(
        spec.treatment_coeffs, dtype=np.float64
    )
    b_coef = np.zeros(k) if spec.baseline_coeffs is None else np.asarray(
        spec.baseline_coeffs, dtype=np.float64
    )
    logit = spec.treatment_intercept + Z @ t_coef
    true_e = 1.0 / (1.0 + np.exp(-logit))
    treatment = (rng.random(n) < true_e).astype(np.uint8)
    if treatment.sum() == 0 or treatment.sum() == n:
        raise SynthError("degenerate treatment assignment; adjust coefficients or seed")

    membership = np.ones(n, dtype=bool)
    for clause in spec.planted_rule:
        if clause.covariate not in columns:
            raise SynthError(f"planted rule names unknown covariate {clause.covariate!r}")
        membership &= clause.matches(columns[clause.covariate])
    frac = membership.mean()
    if frac < 0.01 or frac > 0.99:
        raise SynthError(
            f"planted rule covers {100 * frac:.1f}% of units; must be within [1%, 99%]"
        )

    true_te = np.where(membership, spec.planted_effect, spec.background_effect)
    baseline = Z @ b_coef
    outcome = baseline + true_te * treatment + spec.noise_sd * rng.standard_normal(n)

    dataset = ObservationalDataset(
        schema=schema,
        columns=columns,
        treatment=treatment,
        outcome=outcome,
        treatment_name="treatment",
        outcome_name="outcome",
    )
    truth = GroundTruth(
        true_e=true_e, true_te=true_te, membership=membership, baseline=baseline
    )
    return dataset, truth


SYN_TABLE_SHAPES = {
    "syn-1": (3000, 5, 5),
    "syn-2": (3000, 5, 15),
    "syn-3": (4000, 5, 25),
    "syn-4": (4000, 5, 45),
    "syn-5": (4000, 5, 75),
    "syn-6": (4000, 5, 95),
}


def syn_table_spec(name: str, **overrides) -> SynthSpec:
    """Canned dataset shapes matching the reference benchmark table."""
    shape = SYN_TABLE_SHAPES.get(name.lower())
    if shape is None:
        raise SynthError(f"unknown shape {name!r}; choose from {sorted(SYN_TABLE_SHAPES)}")
    n, n_cat, n_num = shape
    return SynthSpec(n=n, n_categorical=n_cat, n_numerical=n_num, **overrides)


# ---------------------------------------------------------------------------
# exhaustive Pareto oracle and benchmark metrics
# ---------------------------------------------------------------------------


def exhaustive_front(
    dataset: ObservationalDataset,
    matrix: BinaryAtomMatrix,
    model: PropensityModel,
    max_atoms: int = 3,
    min_coverage: int = 0,
    max_length: int = 7,
    min_group: int = DEFAULT_MIN_GROUP,
    objectives: tuple[str, ...] = DEFAULT_OBJECTIVES,
) -> list[RankedSubgroup]:
    """Enumerate every genome with 1..max_atoms atoms, filter by the
    constraints, and return the exact non-dominated set."""
    d = matrix.d
    if d > 14:
        raise SynthError(f"exhaustive oracle limited to d <= 14 atoms, got {d}")
    if max_atoms > 3:
        raise SynthError("max_atoms must be <= 3")
    genomes = []
    for k in range(1, max_atoms + 1):
        for combo in itertools.combinations(range(d), k):
            g = np.zeros(d, dtype=bool)
            g[list(combo)] = True
            genomes.append(g)
    batch = np.ascontiguousarray(np.stack(genomes), dtype=np.uint8)
    weights = ipw_weights(dataset.treatment, model.scores)
    cc, n_t, n_c, mean0, mean1, var0, var1 = kernels.eval_population(
        batch,
        matrix.values,
        matrix.covariate_index,
        dataset.treatment,
        dataset.outcome,
        weights,
    )
    obj_fns = [OBJECTIVE_FNS[name] for name in objectives]
    survivors = []
    for i, genome in enumerate(genomes):
        length = int(np.unique(matrix.covariate_index[genome]).size)
        if (
            int(n_t[i]) < min_group
            or int(n_c[i]) < min_group
            or int(cc[i]) < min_coverage
            or length > max_length
        ):
            continue
        metrics = SubgroupMetrics(
            tau=float(mean1[i] - mean0[i]),
            var0=float(var0[i]),
            var1=float(var1[i]),
            coverage_count=int(cc[i]),
            coverage_pct=float(100.0 * cc[i] / dataset.n),
            antecedent_len=length,
            n_treated=int(n_t[i]),
            n_control=int(n_c[i]),
            mean0=float(mean0[i]),
            mean1=float(mean1[i]),
        )
        objs = tuple(fn(metrics) for fn in obj_fns)
        if all(math.isfinite(v) for v in objs):
            survivors.append((genome, metrics, objs))
    if not survivors:
        raise SynthError("no feasible candidate under the oracle constraints")
    obj_matrix = np.array([s[2] for s in survivors], dtype=np.float64)
    front = non_dominated_sort(obj_matrix)[0]
    result = []
    for i in front.tolist():
        genome, metrics, objs = survivors[i]
        result.append(
            RankedSubgroup(
                subgroup=Subgroup(
                    genome=genome,
                    id=f"oracle-{i}",
                    origin="discovered",
                ),
                metrics=metrics,
                objectives=objs,
                crowding=math.inf,
            )
        )
    return result


@dataclass
class BenchMetrics:
    precision: float
    n_subgroups: int
    avg_len: float
    coverage_pct: float

    def to_row(self) -> dict:
        return {
            "P": self.precision,
            "S": self.n_subgroups,
            "L": self.avg_len,
            "C": self.coverage_pct,
        }


def bench_metrics(
    method_front: Sequence[RankedSubgroup],
    pooled_fronts: Sequence[Sequence[RankedSubgroup]],
) -> BenchMetrics:
    """Precision against the pooled fronts, plus size, mean antecedent
    length, and mean coverage percentage of the method front.

    A member is a true dominating subgroup iff no pooled subgroup strictly
    dominates its objective vector.
    """
    if not method_front:
        raise SynthError("method front is empty")
    pooled = [m.objectives for front in pooled_fronts for m in front]
    true_dominating = 0
    for member in method_front:
        if not any(dominates(other, member.objectives) for other in pooled):
            true_dominating += 1
    return BenchMetrics(
        precision=true_dominating / len(method_front),
        n_subgroups=len(method_front),
        avg_len=float(np.mean([m.metrics.antecedent_len for m in method_front])),
        coverage_pct=float(np.mean([m.metrics.coverage_pct for m in method_front])),
    )
