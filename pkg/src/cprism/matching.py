"""Propensity-score matching explanation of a subgroup's effect.

Treated units covered by the subgroup are walked in ascending unit id; each
greedily takes the still-unmatched control with the nearest propensity score,
provided the gap stays within the caliper. Matched-pair outcome differences
give per-pair treatment effects whose distribution (mean, normal-approximation
confidence interval, display subsample) backs the validation view, alongside
a fixed-bin propensity histogram of both arms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .dataset import BinaryAtomMatrix, CprismError, ObservationalDataset, Subgroup, cover_indices
from .estimators import PropensityModel

DEFAULT_EPSILON = 0.1
DEFAULT_BIN_WIDTH = 0.05
DEFAULT_SAMPLE_CAP = 500


class MatchingError(CprismError):
    pass


@dataclass(frozen=True)
class MatchedPair:
    treated_id: int
    control_id: int
    ite: float  # Y_treated - Y_control
    score_gap: float

    def to_json(self) -> dict:
        return {"t": self.treated_id, "c": self.control_id, "ite": self.ite, "gap": self.score_gap}


@dataclass
class HistogramBin:
    lo: float
    hi: float
    t_count: int
    c_count: int

    def to_json(self) -> dict:
        return {"lo": self.lo, "hi": self.hi, "t_count": self.t_count, "c_count": self.c_count}


@dataclass
class MatchReport:
    pairs: list[MatchedPair]
    n_treated: int
    n_control: int
    mean_ite: float
    ci95: tuple[float, float]
    histogram: list[HistogramBin]
    sampled_pairs: list[MatchedPair]

    @property
    def n_pairs(self) -> int:
        return len(self.pairs)

    def to_json(self) -> dict:
        return {
            "pairs": [p.to_json() for p in self.pairs],
            "mean_ite": self.mean_ite,
            "ci95": [self.ci95[0], self.ci95[1]],
            "hist": [b.to_json() for b in self.histogram],
            "n_treated": self.n_treated,
            "n_control": self.n_control,
            "n_pairs": self.n_pairs,
            "sampled_pairs": [p.to_json() for p in self.sampled_pairs],
        }


def _covered_arms(subgroup, dataset, matrix, model):
    idx = cover_indices(subgroup, matrix)
    treated = idx[dataset.treatment[idx] == 1]
    control = idx[dataset.treatment[idx] == 0]
    # ascending unit id within each arm; cover_indices is already row-ordered
    treated = treated[np.argsort(dataset.unit_ids[treated], kind="stable")]
    control = control[np.argsort(dataset.unit_ids[control], kind="stable")]
    return treated, control


def match_units(
    subgroup: Subgroup,
    dataset: ObservationalDataset,
    matrix: BinaryAtomMatrix,
    model: PropensityModel,
    epsilon: float = DEFAULT_EPSILON,
) -> list[MatchedPair]:
    """One-to-one greedy nearest-score matching under the caliper ``epsilon``.

    Ties on the gap resolve to the control with the smaller unit id, so the
    result is deterministic.
    """
    treated, control = _covered_arms(subgroup, dataset, matrix, model)
    if treated.size == 0 or control.size == 0:
        raise MatchingError("subgroup needs at least one treated and one control covered unit")
    t_scores = np.ascontiguousarray(model.scores[treated])
    c_scores = np.ascontiguousarray(model.scores[control])
    assignment = kernels.greedy_match(t_scores, c_scores, float(epsilon))
    pairs = []
    for a, b in enumerate(assignment):
        if b < 0:
            continue
        ti = int(treated[a])
        ci = int(control[b])
        pairs.append(
            MatchedPair(
                treated_id=int(dataset.unit_ids[ti]),
                control_id=int(dataset.unit_ids[ci]),
                ite=float(dataset.outcome[ti] - dataset.outcome[ci]),
                score_gap=float(abs(model.scores[ti] - model.scores[ci])),
            )
        )
    return pairs


def ite_distribution(pairs: list[MatchedPair]) -> dict:
    """Mean pair effect with a normal-approximation 95% interval."""
    if not pairs:
        raise MatchingError("no matched pairs")
    ites = np.array([p.ite for p in pairs], dtype=np.float64)
    mean = float(ites.mean())
    if ites.size < 2:
        return {"mean_ite": mean, "ci95": (mean, mean), "ites": ites}
    sd = float(ites.std(ddof=1))
    half = 1.96 * sd / math.sqrt(ites.size)
    return {"mean_ite": mean, "ci95": (mean - half, mean + half), "ites": ites}


def propensity_histogram(
    subgroup: Subgroup,
    dataset: ObservationalDataset,
    matrix: BinaryAtomMatrix,
    model: PropensityModel,
    bin_width: float = DEFAULT_BIN_WIDTH,
) -> list[HistogramBin]:
    """Fixed bins over [0, 1]; per-bin treated and control counts conserve
    the covered group sizes."""
    if not (0.0 < bin_width <= 1.0):
        raise MatchingError("bin_width must be in (0, 1]")
    treated, control = _covered_arms(subgroup, dataset, matrix, model)
    n_bins = math.ceil(round(1.0 / bin_width, 9))
    bins = []
    t_idx = np.minimum((model.scores[treated] / bin_width).astype(np.int64), n_bins - 1)
    c_idx = np.minimum((model.scores[control] / bin_width).astype(np.int64), n_bins - 1)
    t_counts = np.bincount(t_idx, minlength=n_bins)
    c_counts = np.bincount(c_idx, minlength=n_bins)
    for k in range(n_bins):
        bins.append(
            HistogramBin(
                lo=round(k * bin_width, 10),
                hi=round(min((k + 1) * bin_width, 1.0), 10),
                t_count=int(t_counts[k]),
                c_count=int(c_counts[k]),
            )
        )
    return bins


def sample_pairs_for_display(
    pairs: list[MatchedPair], cap: int = DEFAULT_SAMPLE_CAP, seed: int = 0
) -> list[MatchedPair]:
    """At most ``cap`` pairs, stratified over the pair-effect deciles so the
    display subsample keeps the distribution shape; deterministic under seed."""
    if len(pairs) <= cap:
        return list(pairs)
    ites = np.array([p.ite for p in pairs], dtype=np.float64)
    edges = np.quantile(ites, [k / 10 for k in range(1, 10)])
    decile = np.searchsorted(edges, ites, side="left")
    rng = np.random.default_rng(seed)
    counts = np.bincount(decile, minlength=10)
    quotas = counts * cap / len(pairs)
    base = np.floor(quotas).astype(np.int64)
    remainder = cap - int(base.sum())
    if remainder > 0:
        order = np.argsort(-(quotas - base), kind="stable")
        base[order[:remainder]] += 1
    chosen: list[int] = []
    for dec in range(10):
        members = np.flatnonzero(decile == dec)
        take = min(int(base[dec]), members.size)
        if take > 0:
            chosen.extend(rng.choice(members, size=take, replace=False).tolist())
    chosen.sort()
    return [pairs[i] for i in chosen]


def build_match_report(
    subgroup: Subgroup,
    dataset: ObservationalDataset,
    matrix: BinaryAtomMatrix,
    model: PropensityModel,
    epsilon: float = DEFAULT_EPSILON,
    bin_width: float = DEFAULT_BIN_WIDTH,
    sample_cap: int = DEFAULT_SAMPLE_CAP,
    seed: int = 0,
) -> MatchReport:
    treated, control = _covered_arms(subgroup, dataset, matrix, model)
    pairs = match_units(subgroup, dataset, matrix, model, epsilon=epsilon)
    hist = propensity_histogram(subgroup, dataset, matrix, model, bin_width=bin_width)
    if pairs:
        dist = ite_distribution(pairs)
        mean_ite = dist["mean_ite"]
        ci95 = dist["ci95"]
    else:
        mean_ite = 0.0
        ci95 = (0.0, 0.0)
    return MatchReport(
        pairs=pairs,
        n_treated=int(treated.size),
        n_control=int(control.size),
        mean_ite=mean_ite,
        ci95=ci95,
        histogram=hist,
        sampled_pairs=sample_pairs_for_display(pairs, cap=sample_cap, seed=seed),
    )
