"""Constrained multi-objective subgroup search.

Maximizes the subgroup treatment effect while minimizing both arms' outcome
variances, subject to a minimum coverage and a maximum antecedent length,
using a genetic loop: random initialization, crossover plus bit flips,
non-dominated sorting, and crowding-distance survival. Infeasible and
duplicate genomes are eliminated each generation; the final population's
first front is the answer, lower fronts ship as diagnostics.

All objectives are carried in minimization orientation (maximized ones are
negated once at evaluation time).
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import kernels
from .dataset import BinaryAtomMatrix, CprismError, ObservationalDataset, Subgroup
from .estimators import (
    DEFAULT_MIN_GROUP,
    PropensityModel,
    SubgroupMetrics,
    ipw_weights,
)


class DiscoveryError(CprismError):
    pass


OBJECTIVE_FNS: dict[str, Callable[[SubgroupMetrics], float]] = {
    "tau_max": lambda m: -m.tau,
    "tau_min": lambda m: m.tau,
    "var0_min": lambda m: m.var0,
    "var1_min": lambda m: m.var1,
    "coverage_max": lambda m: -float(m.coverage_count),
    "length_min": lambda m: float(m.antecedent_len),
}

DEFAULT_OBJECTIVES = ("tau_max", "var0_min", "var1_min")


@dataclass
class SearchParams:
    population: int = 100
    generations: int = 100
    stagnation_window: int = 10
    crossover_rate: float = 0.9
    mutation_rate: Optional[float] = None  # None -> 1/d per bit
    min_coverage: int | str = "5%"
    max_length: int = 7
    min_group: int = DEFAULT_MIN_GROUP
    seed: int = 0
    objectives: tuple[str, ...] = DEFAULT_OBJECTIVES

    def validate(self) -> None:
        if self.population < 4 or self.population % 2 != 0:
            raise DiscoveryError("population must be even and >= 4")
        if not (0.0 < self.crossover_rate <= 1.0):
            raise DiscoveryError("crossover_rate must be in (0, 1]")
        if self.mutation_rate is not None and not (0.0 < self.mutation_rate <= 1.0):
            raise DiscoveryError("mutation_rate must be in (0, 1]")
        if self.max_length < 1:
            raise DiscoveryError("max_length must be >= 1")
        if self.generations < 1:
            raise DiscoveryError("generations must be >= 1")
        if self.stagnation_window < 1:
            raise DiscoveryError("stagnation_window must be >= 1")
        for name in self.objectives:
            if name not in OBJECTIVE_FNS:
                raise DiscoveryError(f"unknown objective {name!r}")

    def resolve_coverage(self, n: int) -> int:
        if isinstance(self.min_coverage, str):
            text = self.min_coverage.strip()
            if not text.endswith("%"):
                raise DiscoveryError(f"min_coverage string must end with %: {text!r}")
            pct = float(text[:-1])
            count = math.ceil(n * pct / 100.0)
        else:
            count = int(self.min_coverage)
        if count < self.min_group * 2:
            raise DiscoveryError(
                f"min_coverage {count} below identifiability floor {self.min_group * 2}"
            )
        return count

    @classmethod
    def from_json(cls, data: dict) -> "SearchParams":
        kwargs = {}
        mapping = {
            "population": "population",
            "generations": "generations",
            "stagnation_window": "stagnation_window",
            "crossover_rate": "crossover_rate",
            "mutation_rate": "mutation_rate",
            "min_coverage": "min_coverage",
            "max_length": "max_length",
            "min_group": "min_group",
            "seed": "seed",
        }
        for key, attr in mapping.items():
            if key in data and data[key] is not None:
                kwargs[attr] = data[key]
        if data.get("objectives"):
            kwargs["objectives"] = tuple(data["objectives"])
        return cls(**kwargs)


def dominates(a: Sequence[float], b: Sequence[float]) -> bool:
    """Pareto dominance in minimization orientation: a <= b everywhere and
    strictly better somewhere."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"objective dimension mismatch: {a.shape} vs {b.shape}")
    return bool((a <= b).all() and (a < b).any())


def non_dominated_sort(objs: np.ndarray) -> list[np.ndarray]:
    """Split points into Pareto fronts; front k is dominated only by fronts < k."""
    objs = np.asarray(objs, dtype=np.float64)
    if objs.ndim != 2 or objs.shape[0] == 0:
        raise ValueError("expected a non-empty (k, m) objective array")
    le = (objs[:, None, :] <= objs[None, :, :]).all(axis=2)
    lt = (objs[:, None, :] < objs[None, :, :]).any(axis=2)
    dom = le & lt  # dom[i, j]: i dominates j
    counts = dom.sum(axis=0).astype(np.int64)
    fronts: list[np.ndarray] = []
    current = np.flatnonzero(counts == 0)
    while current.size:
        fronts.append(current)
        counts[current] = -1
        counts = counts - dom[current].sum(axis=0)
        current = np.flatnonzero(counts == 0)
    return fronts


def crowding_distance(front_objs: np.ndarray) -> np.ndarray:
    """Per-member normalized Manhattan gap to front neighbors; boundary
    members of each objective get infinity, zero-range objectives contribute 0."""
    objs = np.asarray(front_objs, dtype=np.float64)
    if objs.ndim != 2 or objs.shape[0] == 0:
        raise ValueError("expected a non-empty (k, m) objective array")
    k, m = objs.shape
    dist = np.zeros(k)
    if k <= 2:
        return np.full(k, np.inf)
    for j in range(m):
        order = np.argsort(objs[:, j], kind="stable")
        vals = objs[order, j]
        span = vals[-1] - vals[0]
        if span <= 0:
            continue
        dist[order[0]] = np.inf
        dist[order[-1]] = np.inf
        dist[order[1:-1]] += (vals[2:] - vals[:-2]) / span
    return dist


def _repair(genome: np.ndarray, atom_cov: np.ndarray, max_length: int, rng) -> np.ndarray:
    covs = np.unique(atom_cov[genome])
    if covs.size > max_length:
        drop = rng.choice(covs, size=covs.size - max_length, replace=False)
        genome[np.isin(atom_cov, drop)] = False
    if not genome.any():
        genome[int(rng.integers(0, genome.shape[0]))] = True
    return genome


def initialize_population(
    params: SearchParams, d: int, atom_cov: np.ndarray, rng
) -> np.ndarray:
    """P genomes with iid half-probability bits, repaired to the length
    constraint and non-emptiness; deterministic under the generator state."""
    genomes = rng.random((params.population, d)) < 0.5
    for row in genomes:
        _repair(row, atom_cov, params.max_length, rng)
    return genomes


def _tournament(rng, ranks: np.ndarray, crowding: np.ndarray) -> int:
    k = ranks.shape[0]
    i, j = int(rng.integers(0, k)), int(rng.integers(0, k))
    if ranks[i] != ranks[j]:
        return i if ranks[i] < ranks[j] else j
    if crowding[i] != crowding[j]:
        return i if crowding[i] > crowding[j] else j
    return i


def generate_offspring(
    parents: np.ndarray,
    ranks: np.ndarray,
    crowding: np.ndarray,
    params: SearchParams,
    atom_cov: np.ndarray,
    rng,
) -> np.ndarray:
    """P children by binary tournament, single-point crossover, per-bit flips."""
    if parents.shape[0] < 2:
        raise DiscoveryError("offspring generation needs at least 2 parents")
    d = parents.shape[1]
    mut = params.mutation_rate if params.mutation_rate is not None else 1.0 / d
    children = np.empty((params.population, d), dtype=bool)
    count = 0
    while count < params.population:
        p1 = _tournament(rng, ranks, crowding)
        p2 = _tournament(rng, ranks, crowding)
        c1 = parents[p1].copy()
        c2 = parents[p2].copy()
        if d > 1 and rng.random() < params.crossover_rate:
            cut = int(rng.integers(1, d))
            c1[cut:] = parents[p2][cut:]
            c2[cut:] = parents[p1][cut:]
        for child in (c1, c2):
            child ^= rng.random(d) < mut
            _repair(child, atom_cov, params.max_length, rng)
            if count < params.population:
                children[count] = child
                count += 1
    return children


@dataclass
class RankedSubgroup:
    subgroup: Subgroup
    metrics: SubgroupMetrics
    objectives: tuple[float, ...]
    crowding: float


@dataclass
class ParetoResult:
    fronts: list[list[RankedSubgroup]]
    generations_run: int
    stop_reason: str  # max_generations | stagnation | cancelled

    @property
    def front1(self) -> list[RankedSubgroup]:
        return self.fronts[0] if self.fronts else []


def _genome_id(genome: np.ndarray) -> str:
    return "sg-" + hashlib.sha1(genome.tobytes()).hexdigest()[:10]


class _Evaluator:
    """Caches per-genome metrics and feasibility across generations."""

    def __init__(self, dataset, matrix, model, params, min_coverage):
        self.dataset = dataset
        self.matrix = matrix
        self.params = params
        self.min_coverage = min_coverage
        self.weights = ipw_weights(dataset.treatment, model.scores)
        self.obj_fns = [OBJECTIVE_FNS[name] for name in params.objectives]
        self.cache: dict[bytes, tuple[bool, Optional[SubgroupMetrics], Optional[tuple]]] = {}

    def evaluate(self, genomes: np.ndarray) -> None:
        fresh = []
        fresh_keys = []
        seen = set()
        for row in genomes:
            key = row.tobytes()
            if key in self.cache or key in seen:
                continue
            seen.add(key)
            fresh.append(row)
            fresh_keys.append(key)
        if not fresh:
            return
        batch = np.ascontiguousarray(np.stack(fresh), dtype=np.uint8)
        cc, n_t, n_c, mean0, mean1, var0, var1 = kernels.eval_population(
            batch,
            self.matrix.values,
            self.matrix.covariate_index,
            self.dataset.treatment,
            self.dataset.outcome,
            self.weights,
        )
        atom_cov = self.matrix.covariate_index
        n = self.dataset.n
        for idx, key in enumerate(fresh_keys):
            genome = fresh[idx]
            length = int(np.unique(atom_cov[genome]).size)
            evaluable = int(n_t[idx]) >= self.params.min_group and int(
                n_c[idx]
            ) >= self.params.min_group
            feasible = (
                evaluable
                and int(cc[idx]) >= self.min_coverage
                and length <= self.params.max_length
            )
            if not evaluable:
                self.cache[key] = (False, None, None)
                continue
            metrics = SubgroupMetrics(
                tau=float(mean1[idx] - mean0[idx]),
                var0=float(var0[idx]),
                var1=float(var1[idx]),
                coverage_count=int(cc[idx]),
                coverage_pct=float(100.0 * cc[idx] / n),
                antecedent_len=length,
                n_treated=int(n_t[idx]),
                n_control=int(n_c[idx]),
                mean0=float(mean0[idx]),
                mean1=float(mean1[idx]),
            )
            objectives = tuple(fn(metrics) for fn in self.obj_fns)
            feasible = feasible and all(math.isfinite(v) for v in objectives)
            self.cache[key] = (feasible, metrics, objectives)

    def feasible_rows(self, genomes: np.ndarray) -> np.ndarray:
        keep = [i for i, row in enumerate(genomes) if self.cache[row.tobytes()][0]]
        return genomes[keep] if keep else genomes[:0]

    def lookup(self, genome: np.ndarray):
        return self.cache[genome.tobytes()]


def _dedup(genomes: np.ndarray) -> np.ndarray:
    seen = set()
    keep = []
    for i, row in enumerate(genomes):
        key = row.tobytes()
        if key not in seen:
            seen.add(key)
            keep.append(i)
    return genomes[keep]


def discover(
    dataset: ObservationalDataset,
    matrix: BinaryAtomMatrix,
    model: PropensityModel,
    params: SearchParams,
    progress: Optional[Callable[[int], None]] = None,
    should_stop: Optional[Callable[[], bool]] = None,
) -> ParetoResult:
    """Run the full search loop and return the Pareto fronts of the final
    population with metrics and crowding distances.

    Stops at ``params.generations`` or when the first front's objective
    multiset has not changed for ``params.stagnation_window`` generations.
    ``should_stop`` is polled between generations for cooperative
    cancellation.
    """
    params.validate()
    min_coverage = params.resolve_coverage(matrix.n)
    rng = np.random.default_rng(params.seed)
    atom_cov = matrix.covariate_index
    ev = _Evaluator(dataset, matrix, model, params, min_coverage)

    pop = None
    for _ in range(6):
        candidate = _dedup(initialize_population(params, matrix.d, atom_cov, rng))
        ev.evaluate(candidate)
        feasible = ev.feasible_rows(candidate)
        if feasible.shape[0] > 0:
            pop = feasible
            break
    if pop is None:
        raise DiscoveryError(
            "no feasible subgroup after initialization and 5 restarts; constraints too tight"
        )

    ranks, crowd = _rank_population(pop, ev)
    stop_reason = "max_generations"
    prev_sig: Optional[tuple] = None
    stagnant = 0
    generations_run = 0
    for gen in range(1, params.generations + 1):
        if should_stop is not None and should_stop():
            stop_reason = "cancelled"
            break
        parents = pop if pop.shape[0] >= 2 else np.vstack([pop, pop])
        parent_ranks = ranks if pop.shape[0] >= 2 else np.concatenate([ranks, ranks])
        parent_crowd = crowd if pop.shape[0] >= 2 else np.concatenate([crowd, crowd])
        offspring = generate_offspring(
            parents, parent_ranks, parent_crowd, params, atom_cov, rng
        )
        candidates = _dedup(np.vstack([pop, offspring]))
        ev.evaluate(candidates)
        candidates = ev.feasible_rows(candidates)
        pop, ranks, crowd = _survival_select(candidates, ev, params.population)
        generations_run = gen
        if progress is not None:
            progress(gen)
        sig = _front1_signature(pop, ranks, ev)
        if sig == prev_sig:
            stagnant += 1
        else:
            stagnant = 0
            prev_sig = sig
        if stagnant >= params.stagnation_window:
            stop_reason = "stagnation"
            break

    return _build_result(pop, ev, generations_run, stop_reason)


def _rank_population(pop: np.ndarray, ev: _Evaluator):
    objs = np.array([ev.lookup(row)[2] for row in pop], dtype=np.float64)
    fronts = non_dominated_sort(objs)
    ranks = np.zeros(pop.shape[0], dtype=np.int64)
    crowd = np.zeros(pop.shape[0])
    for fi, front in enumerate(fronts):
        ranks[front] = fi
        crowd[front] = crowding_distance(objs[front])
    return ranks, crowd


def _survival_select(candidates: np.ndarray, ev: _Evaluator, capacity: int):
    """Keep up to ``capacity`` members, whole fronts first, then by crowding."""
    if candidates.shape[0] == 0:
        raise DiscoveryError("population went extinct after constraint filtering")
    objs = np.array([ev.lookup(row)[2] for row in candidates], dtype=np.float64)
    fronts = non_dominated_sort(objs)
    chosen: list[int] = []
    chosen_rank: list[int] = []
    chosen_crowd: list[float] = []
    for fi, front in enumerate(fronts):
        cd = crowding_distance(objs[front])
        if len(chosen) + front.size <= capacity:
            chosen.extend(front.tolist())
            chosen_rank.extend([fi] * front.size)
            chosen_crowd.extend(cd.tolist())
        else:
            room = capacity - len(chosen)
            order = np.argsort(-cd, kind="stable")[:room]
            chosen.extend(front[order].tolist())
            chosen_rank.extend([fi] * room)
            chosen_crowd.extend(cd[order].tolist())
            break
    idx = np.asarray(chosen, dtype=np.int64)
    return candidates[idx], np.asarray(chosen_rank, dtype=np.int64), np.asarray(chosen_crowd)


def _front1_signature(pop: np.ndarray, ranks: np.ndarray, ev: _Evaluator) -> tuple:
    members = [ev.lookup(row)[2] for row, rank in zip(pop, ranks) if rank == 0]
    return tuple(sorted(members))


def _build_result(
    pop: np.ndarray, ev: _Evaluator, generations_run: int, stop_reason: str
) -> ParetoResult:
    objs = np.array([ev.lookup(row)[2] for row in pop], dtype=np.float64)
    fronts = non_dominated_sort(objs)
    out: list[list[RankedSubgroup]] = []
    for front in fronts:
        cd = crowding_distance(objs[front])
        members = []
        for pos, i in enumerate(front.tolist()):
            genome = pop[i]
            _, metrics, objectives = ev.lookup(genome)
            members.append(
                RankedSubgroup(
                    subgroup=Subgroup(
                        genome=genome.copy(), id=_genome_id(genome), origin="discovered"
                    ),
                    metrics=metrics,
                    objectives=objectives,
                    crowding=float(cd[pos]),
                )
            )
        members.sort(key=lambda m: m.subgroup.id)
        out.append(members)
    return ParetoResult(fronts=out, generations_run=generations_run, stop_reason=stop_reason)
