"""Propensity modeling, IPW weights, and subgroup effect estimation.

The propensity model is a logistic regression of treatment on the binary atom
features (plus intercept), fit by Newton / iteratively reweighted least
squares with an L2 penalty on the non-intercept coefficients. Scores are
clipped so inverse-probability weights stay bounded.

A subgroup's consequent is the IPW-normalized difference of weighted factual
outcome means between the covered treated and control units

    tau = sum(w*Y | T=1, covered) / sum(w | T=1, covered)
        - sum(w*Y | T=0, covered) / sum(w | T=0, covered)

with per-arm weighted outcome variances around each arm's own weighted mean.
"""

from __future__ import annotations

from dataclasses import dataclass
import numpy as np

from . import kernels
from .dataset import (
    BinaryAtomMatrix,
    CprismError,
    ObservationalDataset,
    Subgroup,
    antecedent_length,
)

DEFAULT_CLIP = (0.01, 0.99)
DEFAULT_MIN_GROUP = 10


class EffectNotIdentifiable(CprismError):
    """Raised when a subgroup lacks enough treated or control units."""


@dataclass
class PropensityModel:
    coefficients: np.ndarray  # (d + 1,), intercept last
    scores: np.ndarray  # per-unit, clipped
    clip_lo: float
    clip_hi: float
    converged: bool
    n_iter: int

    @property
    def n(self) -> int:
        return self.scores.shape[0]


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(z, -35.0, 35.0)))


def fit_propensity(
    dataset: ObservationalDataset,
    matrix: BinaryAtomMatrix,
    l2: float = 1e-4,
    max_iter: int = 200,
    tol: float = 1e-8,
    clip: tuple[float, float] = DEFAULT_CLIP,
) -> PropensityModel:
    """Fit treatment ~ atoms by penalized IRLS; returns clipped scores.

    Non-convergence within ``max_iter`` keeps the best iterate and reports
    ``converged=False``.
    """
    t = dataset.treatment.astype(np.float64)
    n_treated = int(t.sum())
    if n_treated == 0 or n_treated == len(t):
        raise EffectNotIdentifiable("propensity fit needs both treated and control units")
    X = np.column_stack([matrix.values.astype(np.float64), np.ones(matrix.n)])
    d1 = X.shape[1]
    penalty = np.full(d1, l2)
    penalty[-1] = 0.0  # intercept unpenalized

    def objective(b: np.ndarray) -> float:
        z = X @ b
        ll = float(np.dot(t, z) - np.logaddexp(0.0, z).sum())
        return ll - 0.5 * float(np.dot(penalty, b * b))

    beta = np.zeros(d1)
    current = objective(beta)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        p = _sigmoid(X @ beta)
        w = np.maximum(p * (1.0 - p), 1e-12)
        grad = X.T @ (t - p) - penalty * beta
        hess = (X * w[:, None]).T @ X
        hess[np.diag_indices_from(hess)] += penalty + 1e-12
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            break
        # backtrack if the Newton step overshoots (separable data, tiny ridge)
        size = 1.0
        proposed = objective(beta + step)
        while proposed < current and size > 1e-10:
            size *= 0.5
            proposed = objective(beta + size * step)
        beta = beta + size * step
        current = proposed
        if float(np.max(np.abs(size * step))) < tol:
            converged = True
            break
    scores = np.clip(_sigmoid(X @ beta), clip[0], clip[1])
    return PropensityModel(
        coefficients=beta,
        scores=scores,
        clip_lo=clip[0],
        clip_hi=clip[1],
        converged=converged,
        n_iter=it,
    )


def ipw_weights(treatment: np.ndarray, scores: np.ndarray) -> np.ndarray:
    """w_i = T_i/e_i + (1-T_i)/(1-e_i); bounded by 1/clip_lo under clipping."""
    t = np.asarray(treatment, dtype=np.float64)
    e = np.asarray(scores, dtype=np.float64)
    return t / e + (1.0 - t) / (1.0 - e)


@dataclass
class SubgroupMetrics:
    tau: float
    var0: float
    var1: float
    coverage_count: int
    coverage_pct: float
    antecedent_len: int
    n_treated: int
    n_control: int
    mean0: float
    mean1: float

    def to_json(self) -> dict:
        return {
            "tau": self.tau,
            "var0": self.var0,
            "var1": self.var1,
            "coverage": self.coverage_count,
            "coverage_pct": self.coverage_pct,
            "length": self.antecedent_len,
            "n_treated": self.n_treated,
            "n_control": self.n_control,
        }


def _genome_stats(
    subgroup: Subgroup,
    dataset: ObservationalDataset,
    matrix: BinaryAtomMatrix,
    model: PropensityModel,
):
    genomes = np.ascontiguousarray(subgroup.genome[None, :], dtype=np.uint8)
    weights = ipw_weights(dataset.treatment, model.scores)
    out = kernels.eval_population(
        genomes,
        matrix.values,
        matrix.covariate_index,
        dataset.treatment,
        dataset.outcome,
        weights,
    )
    return tuple(a[0] for a in out)


def _require_arms(n_t: int, n_c: int, min_group: int, what: str) -> None:
    if n_t < min_group or n_c < min_group:
        raise EffectNotIdentifiable(
            f"{what}: needs >= {min_group} treated and control covered units "
            f"(got {n_t} treated, {n_c} control)"
        )


def estimate_cate(
    subgroup: Subgroup,
    dataset: ObservationalDataset,
    matrix: BinaryAtomMatrix,
    model: PropensityModel,
    min_group: int = DEFAULT_MIN_GROUP,
) -> float:
    """IPW-normalized treated-minus-control outcome mean over covered units."""
    _, n_t, n_c, mean0, mean1, _, _ = _genome_stats(subgroup, dataset, matrix, model)
    _require_arms(int(n_t), int(n_c), min_group, "effect not identifiable for this subgroup")
    return float(mean1 - mean0)


def estimate_variances(
    subgroup: Subgroup,
    dataset: ObservationalDataset,
    matrix: BinaryAtomMatrix,
    model: PropensityModel,
    min_group: int = DEFAULT_MIN_GROUP,
) -> tuple[float, float]:
    """Weighted outcome variance per arm, around that arm's weighted mean."""
    _, n_t, n_c, _, _, var0, var1 = _genome_stats(subgroup, dataset, matrix, model)
    _require_arms(int(n_t), int(n_c), min_group, "variance not identifiable for this subgroup")
    return float(var0), float(var1)


def evaluate_subgroup(
    subgroup: Subgroup,
    dataset: ObservationalDataset,
    matrix: BinaryAtomMatrix,
    model: PropensityModel,
    min_group: int = DEFAULT_MIN_GROUP,
) -> SubgroupMetrics:
    """Full consequent for one subgroup; the empty-genome ALL pseudo-subgroup
    yields population-level metrics (its tau is the IPW ATE)."""
    cc, n_t, n_c, mean0, mean1, var0, var1 = _genome_stats(subgroup, dataset, matrix, model)
    _require_arms(int(n_t), int(n_c), min_group, "effect not identifiable for this subgroup")
    return SubgroupMetrics(
        tau=float(mean1 - mean0),
        var0=float(var0),
        var1=float(var1),
        coverage_count=int(cc),
        coverage_pct=float(100.0 * cc / dataset.n),
        antecedent_len=antecedent_length(subgroup, matrix),
        n_treated=int(n_t),
        n_control=int(n_c),
        mean0=float(mean0),
        mean1=float(mean1),
    )
