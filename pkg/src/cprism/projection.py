"""2-D unit projection for the scatter view.

Mixed-type dissimilarities come from the Gower distance (categorical
mismatch, range-normalized numeric difference, averaged per covariate,
treatment and outcome excluded). The layout minimizes Kruskal stress-1 by
alternating pool-adjacent-violators isotonic regression over the rank-ordered
dissimilarities with stress-majorization (Guttman transform) layout updates.
Tied dissimilarities share a single disparity (the weighted block mean), so
equal inputs are pushed toward equal embedded distances. An update that would
raise the stress is rejected and iteration stops, so the reported stress
sequence is non-increasing by construction.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .dataset import CATEGORICAL, ObservationalDataset


@dataclass
class ProjectionLayout:
    coords: np.ndarray  # (n, dims)
    final_stress: float
    iterations_run: int
    converged: bool
    stress_history: list[float] = field(default_factory=list)


def gower_distance(dataset: ObservationalDataset) -> np.ndarray:
    """Pairwise Gower distances over covariates only.

    Categorical columns contribute 0/1 mismatch, numerical ones |delta|/range
    (constant columns contribute 0); entries are the per-covariate mean.
    """
    if dataset.n < 2:
        raise ValueError("need at least 2 units")
    num_cols = []
    cat_cols = []
    for spec in dataset.schema:
        col = dataset.columns[spec.name]
        if spec.kind == CATEGORICAL:
            _, codes = np.unique(col, return_inverse=True)
            cat_cols.append(codes.astype(np.int64))
        else:
            vals = col.astype(np.float64)
            span = float(vals.max() - vals.min())
            num_cols.append(vals / span if span > 0 else np.zeros_like(vals))
    n = dataset.n
    num = (
        np.ascontiguousarray(np.column_stack(num_cols))
        if num_cols
        else np.zeros((n, 0), dtype=np.float64)
    )
    cat = (
        np.ascontiguousarray(np.column_stack(cat_cols))
        if cat_cols
        else np.zeros((n, 0), dtype=np.int64)
    )
    if num.shape[1] + cat.shape[1] == 0:
        raise ValueError("dataset has no covariates")
    return kernels.gower_matrix(num, cat)


def _check_distance_matrix(distances: np.ndarray) -> np.ndarray:
    D = np.asarray(distances, dtype=np.float64)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise ValueError("distance matrix must be square")
    if not np.isfinite(D).all():
        raise ValueError("distance matrix must be finite")
    if (D < 0).any():
        raise ValueError("distance matrix must be non-negative")
    if not np.allclose(D, D.T, atol=1e-12):
        raise ValueError("distance matrix must be symmetric")
    if not np.allclose(np.diag(D), 0.0, atol=1e-12):
        raise ValueError("distance matrix diagonal must be zero")
    return D


def _pair_distances(coords: np.ndarray, iu) -> np.ndarray:
    diff = coords[iu[0]] - coords[iu[1]]
    return np.sqrt((diff * diff).sum(axis=1))


def _tie_blocks(delta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pairs with equal input dissimilarity share one disparity (secondary
    tie treatment), so blocks are the unique dissimilarity values."""
    _, block_index = np.unique(delta, return_inverse=True)
    counts = np.bincount(block_index).astype(np.float64)
    return block_index, counts


def _stress_for(
    dist: np.ndarray, block_index: np.ndarray, counts: np.ndarray
) -> tuple[float, np.ndarray]:
    means = np.bincount(block_index, weights=dist) / counts
    fitted = np.asarray(kernels.isotonic_fit(means, counts))
    disparities = fitted[block_index]
    denom = float((dist * dist).sum())
    if denom <= 0.0:
        return 0.0, disparities
    num = float(((dist - disparities) ** 2).sum())
    return float(np.sqrt(num / denom)), disparities


def stress_1(distances: np.ndarray, coords: np.ndarray) -> float:
    """Kruskal stress-1 of a layout against input dissimilarities."""
    D = _check_distance_matrix(distances)
    iu = np.triu_indices(D.shape[0], k=1)
    block_index, counts = _tie_blocks(D[iu])
    stress, _ = _stress_for(
        _pair_distances(np.asarray(coords, dtype=np.float64), iu), block_index, counts
    )
    return stress


def nmds(
    distances: np.ndarray,
    dims: int = 2,
    max_iter: int = 300,
    tol: float = 1e-6,
    seed: int = 0,
) -> ProjectionLayout:
    """Non-metric MDS layout; deterministic under ``seed``.

    The stress history is monotone non-increasing: a majorization step that
    fails to improve the stress is rolled back and iteration stops.
    """
    D = _check_distance_matrix(distances)
    n = D.shape[0]
    if n < 3:
        raise ValueError("need at least 3 units to project")
    iu = np.triu_indices(n, k=1)
    delta = D[iu]
    if not delta.any():
        warnings.warn("all distances are zero; projecting every unit at the origin", stacklevel=2)
        return ProjectionLayout(
            coords=np.zeros((n, dims)),
            final_stress=0.0,
            iterations_run=0,
            converged=True,
            stress_history=[0.0],
        )
    block_index, counts = _tie_blocks(delta)
    rng = np.random.default_rng(seed)
    coords = rng.standard_normal((n, dims)) * float(delta.mean())

    dist = _pair_distances(coords, iu)
    stress, disparities = _stress_for(dist, block_index, counts)
    history = [stress]
    converged = False
    iterations = 0
    for _ in range(max_iter):
        new_coords = _guttman_update(coords, dist, disparities, iu, n)
        new_dist = _pair_distances(new_coords, iu)
        new_stress, new_disp = _stress_for(new_dist, block_index, counts)
        if new_stress > stress:
            break  # keep the previous, better layout
        iterations += 1
        improvement = stress - new_stress
        coords, dist, stress, disparities = new_coords, new_dist, new_stress, new_disp
        history.append(stress)
        if improvement < tol:
            converged = True
            break
    return ProjectionLayout(
        coords=coords,
        final_stress=stress,
        iterations_run=iterations,
        converged=converged,
        stress_history=history,
    )


def _guttman_update(coords, dist, disparities, iu, n):
    ratio = np.zeros_like(dist)
    nz = dist > 0
    ratio[nz] = disparities[nz] / dist[nz]
    B = np.zeros((n, n))
    B[iu] = -ratio
    B[(iu[1], iu[0])] = -ratio
    B[np.diag_indices(n)] = -B.sum(axis=1)
    return B @ coords / n


def project_dataset(
    dataset: ObservationalDataset,
    member_masks: dict[str, np.ndarray] | None = None,
    cap: int = 5000,
    dims: int = 2,
    max_iter: int = 300,
    tol: float = 1e-6,
    seed: int = 0,
) -> dict:
    """Full projection pipeline for the scatter view.

    Above ``cap`` units, a subsample stratified by subgroup-membership
    pattern keeps highlighted subgroups represented. Returns the layout JSON
    contract: points with per-unit subgroup ids, plus the final stress.
    """
    member_masks = member_masks or {}
    n = dataset.n
    if n <= cap:
        positions = np.arange(n)
    else:
        rng = np.random.default_rng(seed)
        if member_masks:
            M = np.column_stack([mask.astype(np.uint8) for mask in member_masks.values()])
            _, pattern = np.unique(M, axis=0, return_inverse=True)
        else:
            pattern = np.zeros(n, dtype=np.int64)
        picked: list[int] = []
        for pat in np.unique(pattern):
            members = np.flatnonzero(pattern == pat)
            take = min(members.size, max(1, int(round(cap * members.size / n))))
            picked.extend(rng.choice(members, size=take, replace=False).tolist())
        if len(picked) > cap:
            picked = rng.choice(np.array(picked), size=cap, replace=False).tolist()
        positions = np.array(sorted(picked), dtype=np.int64)
    sub = _subset(dataset, positions)
    layout = nmds(gower_distance(sub), dims=dims, max_iter=max_iter, tol=tol, seed=seed)
    points = []
    for row, pos in enumerate(positions.tolist()):
        memberships = [sid for sid, mask in member_masks.items() if bool(mask[pos])]
        points.append(
            {
                "id": int(dataset.unit_ids[pos]),
                "x": float(layout.coords[row, 0]),
                "y": float(layout.coords[row, 1]),
                "subgroups": memberships,
            }
        )
    return {"points": points, "stress": layout.final_stress}


def _subset(dataset: ObservationalDataset, positions: np.ndarray) -> ObservationalDataset:
    return ObservationalDataset(
        schema=dataset.schema,
        columns={name: col[positions] for name, col in dataset.columns.items()},
        treatment=dataset.treatment[positions],
        outcome=dataset.outcome[positions],
        treatment_name=dataset.treatment_name,
        outcome_name=dataset.outcome_name,
        unit_ids=dataset.unit_ids[positions],
        report=None,
    )
