"""Hot numeric kernels with jitted and pure-numpy implementations.

The jitted variants are plain loops compiled by numba; the numpy variants are
vectorized and semantically identical (floating-point sums may differ at
machine precision because of summation order). Dispatch is decided once at
import by :mod:`cprism.accel`; both variants stay importable so the benchmark
and parity tests can compare them.

Data layout contract shared by all kernels:

* ``X`` is the (n, d) binary atom matrix as uint8,
* ``atom_cov`` maps each atom column to its source covariate index and is
  non-decreasing (atoms are grouped by covariate),
* a unit is covered by a genome when, for every covariate with at least one
  selected atom, at least one of those atoms is true for the unit; a genome
  with no selected atoms covers every unit.
"""

from __future__ import annotations

import numpy as np

from .accel import NUMBA_ENABLED, njit

__all__ = [
    "eval_population",
    "cover_mask",
    "greedy_match",
    "isotonic_fit",
    "gower_matrix",
    "NUMBA_ENABLED",
]


# ---------------------------------------------------------------------------
# population evaluation: coverage + IPW moments for a batch of genomes
# ---------------------------------------------------------------------------


def _eval_population_loop(genomes, X, atom_cov, treatment, outcome, weights):
    P, d = genomes.shape
    n = X.shape[0]
    cover_count = np.zeros(P, np.int64)
    n_treated = np.zeros(P, np.int64)
    n_control = np.zeros(P, np.int64)
    mean0 = np.full(P, np.nan)
    mean1 = np.full(P, np.nan)
    var0 = np.full(P, np.nan)
    var1 = np.full(P, np.nan)
    covered = np.zeros(n, np.uint8)
    sel = np.empty(d, np.int64)
    for p in range(P):
        n_sel = 0
        for j in range(d):
            if genomes[p, j]:
                sel[n_sel] = j
                n_sel += 1
        sw0 = 0.0
        swy0 = 0.0
        sw1 = 0.0
        swy1 = 0.0
        cc = 0
        ct = 0
        cn = 0
        for i in range(n):
            ok = True
            k = 0
            while k < n_sel:
                cov = atom_cov[sel[k]]
                sat = False
                while k < n_sel and atom_cov[sel[k]] == cov:
                    if X[i, sel[k]]:
                        sat = True
                    k += 1
                if not sat:
                    ok = False
                    break
            covered[i] = 1 if ok else 0
            if ok:
                cc += 1
                wi = weights[i]
                if treatment[i]:
                    ct += 1
                    sw1 += wi
                    swy1 += wi * outcome[i]
                else:
                    cn += 1
                    sw0 += wi
                    swy0 += wi * outcome[i]
        cover_count[p] = cc
        n_treated[p] = ct
        n_control[p] = cn
        if ct > 0 and cn > 0:
            m0 = swy0 / sw0
            m1 = swy1 / sw1
            v0 = 0.0
            v1 = 0.0
            for i in range(n):
                if covered[i]:
                    wi = weights[i]
                    if treatment[i]:
                        dy = outcome[i] - m1
                        v1 += wi * dy * dy
                    else:
                        dy = outcome[i] - m0
                        v0 += wi * dy * dy
            mean0[p] = m0
            mean1[p] = m1
            var0[p] = v0 / sw0
            var1[p] = v1 / sw1
    return cover_count, n_treated, n_control, mean0, mean1, var0, var1


def eval_population_numpy(genomes, X, atom_cov, treatment, outcome, weights):
    P = genomes.shape[0]
    n = X.shape[0]
    Xb = X != 0
    t_mask = treatment != 0
    cover_count = np.zeros(P, np.int64)
    n_treated = np.zeros(P, np.int64)
    n_control = np.zeros(P, np.int64)
    mean0 = np.full(P, np.nan)
    mean1 = np.full(P, np.nan)
    var0 = np.full(P, np.nan)
    var1 = np.full(P, np.nan)
    for p in range(P):
        mask = _cover_mask_numpy(genomes[p], Xb, atom_cov)
        mt = mask & t_mask
        mc = mask & ~t_mask
        ct = int(mt.sum())
        cn = int(mc.sum())
        cover_count[p] = ct + cn
        n_treated[p] = ct
        n_control[p] = cn
        if ct > 0 and cn > 0:
            w1 = weights[mt]
            w0 = weights[mc]
            y1 = outcome[mt]
            y0 = outcome[mc]
            sw1 = w1.sum()
            sw0 = w0.sum()
            m1 = float(np.dot(w1, y1) / sw1)
            m0 = float(np.dot(w0, y0) / sw0)
            mean1[p] = m1
            mean0[p] = m0
            var1[p] = float(np.dot(w1, (y1 - m1) ** 2) / sw1)
            var0[p] = float(np.dot(w0, (y0 - m0) ** 2) / sw0)
    return cover_count, n_treated, n_control, mean0, mean1, var0, var1


# ---------------------------------------------------------------------------
# single-genome coverage mask
# ---------------------------------------------------------------------------


def _cover_mask_loop(genome, X, atom_cov):
    n, d = X.shape
    out = np.zeros(n, np.uint8)
    sel = np.empty(d, np.int64)
    n_sel = 0
    for j in range(d):
        if genome[j]:
            sel[n_sel] = j
            n_sel += 1
    for i in range(n):
        ok = True
        k = 0
        while k < n_sel:
            cov = atom_cov[sel[k]]
            sat = False
            while k < n_sel and atom_cov[sel[k]] == cov:
                if X[i, sel[k]]:
                    sat = True
                k += 1
            if not sat:
                ok = False
                break
        out[i] = 1 if ok else 0
    return out


def _cover_mask_numpy(genome, Xb, atom_cov):
    g = genome != 0
    if not g.any():
        return np.ones(Xb.shape[0], dtype=bool)
    mask = np.ones(Xb.shape[0], dtype=bool)
    for cov in np.unique(atom_cov[g]):
        cols = g & (atom_cov == cov)
        mask &= Xb[:, cols].any(axis=1)
    return mask


def cover_mask_numpy(genome, X, atom_cov):
    return _cover_mask_numpy(genome, X != 0, atom_cov)


# ---------------------------------------------------------------------------
# greedy nearest-score matching under a caliper
# ---------------------------------------------------------------------------


def _greedy_match_loop(treated_scores, control_scores, epsilon):
    nt = treated_scores.shape[0]
    nc = control_scores.shape[0]
    matches = np.full(nt, -1, np.int64)
    used = np.zeros(nc, np.uint8)
    for a in range(nt):
        best = -1
        best_gap = 0.0
        for b in range(nc):
            if used[b]:
                continue
            gap = abs(treated_scores[a] - control_scores[b])
            if gap <= epsilon and (best == -1 or gap < best_gap):
                best = b
                best_gap = gap
        if best >= 0:
            matches[a] = best
            used[best] = 1
    return matches


def greedy_match_numpy(treated_scores, control_scores, epsilon):
    nt = treated_scores.shape[0]
    matches = np.full(nt, -1, np.int64)
    gaps = np.empty(control_scores.shape[0])
    alive = np.ones(control_scores.shape[0], dtype=bool)
    for a in range(nt):
        np.abs(control_scores - treated_scores[a], out=gaps)
        gaps[~alive] = np.inf
        b = int(np.argmin(gaps))
        if gaps[b] <= epsilon:
            matches[a] = b
            alive[b] = False
    return matches


# ---------------------------------------------------------------------------
# pool-adjacent-violators isotonic regression (uniform weights)
# ---------------------------------------------------------------------------


def _isotonic_fit_loop(y, w):
    n = y.shape[0]
    level = np.empty(n)
    weight = np.empty(n)
    start = np.empty(n, np.int64)
    out = np.empty(n)
    k = -1
    for i in range(n):
        k += 1
        level[k] = y[i]
        weight[k] = w[i]
        start[k] = i
        while k > 0 and level[k - 1] > level[k]:
            tot = weight[k - 1] + weight[k]
            level[k - 1] = (weight[k - 1] * level[k - 1] + weight[k] * level[k]) / tot
            weight[k - 1] = tot
            k -= 1
    for b in range(k + 1):
        end = start[b + 1] if b < k else n
        for i in range(start[b], end):
            out[i] = level[b]
    return out


def isotonic_fit_numpy(y, w):
    return _isotonic_fit_loop(
        np.asarray(y, dtype=np.float64), np.asarray(w, dtype=np.float64)
    )


# ---------------------------------------------------------------------------
# Gower distance matrix over pre-scaled numeric columns and category codes
# ---------------------------------------------------------------------------


def _gower_matrix_loop(num_scaled, cat_codes):
    n = num_scaled.shape[0]
    k = num_scaled.shape[1]
    m = cat_codes.shape[1]
    D = np.zeros((n, n))
    denom = k + m
    for i in range(n):
        for j in range(i + 1, n):
            acc = 0.0
            for c in range(k):
                acc += abs(num_scaled[i, c] - num_scaled[j, c])
            for c in range(m):
                if cat_codes[i, c] != cat_codes[j, c]:
                    acc += 1.0
            v = acc / denom
            D[i, j] = v
            D[j, i] = v
    return D


def gower_matrix_numpy(num_scaled, cat_codes):
    n = num_scaled.shape[0]
    D = np.zeros((n, n))
    for c in range(num_scaled.shape[1]):
        col = num_scaled[:, c]
        D += np.abs(col[:, None] - col[None, :])
    for c in range(cat_codes.shape[1]):
        col = cat_codes[:, c]
        D += (col[:, None] != col[None, :]).astype(np.float64)
    D /= num_scaled.shape[1] + cat_codes.shape[1]
    return D


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

if NUMBA_ENABLED:
    eval_population_jit = njit(_eval_population_loop)
    cover_mask_jit = njit(_cover_mask_loop)
    greedy_match_jit = njit(_greedy_match_loop)
    isotonic_fit_jit = njit(_isotonic_fit_loop)
    gower_matrix_jit = njit(_gower_matrix_loop)

    eval_population = eval_population_jit
    cover_mask = cover_mask_jit
    greedy_match = greedy_match_jit
    isotonic_fit = isotonic_fit_jit
    gower_matrix = gower_matrix_jit
else:
    eval_population_jit = None
    cover_mask_jit = None
    greedy_match_jit = None
    isotonic_fit_jit = None
    gower_matrix_jit = None

    eval_population = eval_population_numpy
    cover_mask = cover_mask_numpy
    greedy_match = greedy_match_numpy
    isotonic_fit = isotonic_fit_numpy
    gower_matrix = gower_matrix_numpy
