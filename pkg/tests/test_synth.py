import itertools
import math

import numpy as np
import pytest

from cprism.dataset import Subgroup, binarize
from cprism.discovery import SearchParams, discover, dominates, non_dominated_sort
from cprism.estimators import EffectNotIdentifiable, evaluate_subgroup, fit_propensity
from cprism.synth import (
    BenchMetrics,
    RuleClause,
    SynthError,
    SynthSpec,
    bench_metrics,
    exhaustive_front,
    generate_synthetic,
    syn_table_spec,
)


def small_spec(**overrides):
    base = dict(
        n=800,
        n_categorical=2,
        n_numerical=1,
        seed=0,
        planted_rule=(RuleClause(covariate="num_0", lo=0.0, hi=None),),
        planted_effect=5.0,
        background_effect=0.0,
        noise_sd=1.0,
    )
    base.update(overrides)
    return SynthSpec(**base)


class TestGenerator:
    def test_deterministic_under_seed(self):
        a, ta = generate_synthetic(small_spec(seed=3))
        b, tb = generate_synthetic(small_spec(seed=3))
        assert (a.outcome == b.outcome).all()
        assert (a.treatment == b.treatment).all()
        for name in a.covariate_names:
            assert (a.columns[name] == b.columns[name]).all()
        assert (ta.true_e == tb.true_e).all()
        c, _ = generate_synthetic(small_spec(seed=4))
        assert not (a.outcome == c.outcome).all()

    def test_syn1_shape(self):
        data, _ = generate_synthetic(syn_table_spec("syn-1", seed=1))
        assert data.n == 3000
        cats = [s for s in data.schema if s.kind == "categorical"]
        nums = [s for s in data.schema if s.kind == "numerical"]
        assert len(cats) == 5 and len(nums) == 5

    def test_rct_mode_treated_fraction(self):
        data, truth = generate_synthetic(small_spec(n=3000, treatment_coeffs=None, seed=2))
        assert (truth.true_e == 0.5).all()
        assert abs(data.treatment.mean() - 0.5) < 0.03

    def test_membership_matches_rule_reapplication(self):
        spec = small_spec(
            planted_rule=(
                RuleClause(covariate="cat_0", values=("A", "B")),
                RuleClause(covariate="num_0", lo=-0.5, hi=1.0),
            )
        )
        data, truth = generate_synthetic(spec)
        expected = np.isin(data.columns["cat_0"], np.array(["A", "B"], dtype=object)) & (
            (data.columns["num_0"] > -0.5) & (data.columns["num_0"] <= 1.0)
        )
        assert (truth.membership == expected).all()

    def test_planted_effect_visible_in_treated_means(self):
        data, truth = generate_synthetic(small_spec(n=3000, seed=5))
        t = data.treatment.astype(bool)
        inside = float(data.outcome[t & truth.membership].mean())
        outside = float(data.outcome[t & ~truth.membership].mean())
        assert inside - outside == pytest.approx(5.0, abs=0.3)

    def test_rule_coverage_bounds_rejected(self):
        with pytest.raises(SynthError, match="%"):
            generate_synthetic(small_spec(planted_rule=(RuleClause("num_0", lo=10.0, hi=None),)))
        with pytest.raises(SynthError, match="%"):
            generate_synthetic(small_spec(planted_rule=(RuleClause("num_0", lo=-10.0, hi=None),)))

    def test_spec_validation(self):
        with pytest.raises(SynthError):
            SynthSpec(n=50).validate()
        with pytest.raises(SynthError):
            SynthSpec(planted_rule=()).validate()
        with pytest.raises(SynthError):
            SynthSpec(noise_sd=-1.0).validate()
        with pytest.raises(SynthError):
            SynthSpec(treatment_coeffs=(1.0,)).validate()

    def test_unconfoundedness_residual_independent_of_treatment(self):
        spec = small_spec(
            n=4000,
            seed=6,
            treatment_coeffs=(0.5, 0.0, 0.7),
            baseline_coeffs=(0.3, 0.0, 0.2),
        )
        data, truth = generate_synthetic(spec)
        resid = data.outcome - truth.baseline - truth.true_te * data.treatment
        tol = 3.0 / math.sqrt(data.n)
        t = data.treatment.astype(np.float64)
        assert abs(np.corrcoef(resid, t)[0, 1]) < tol
        # and within each stratum of the first categorical covariate
        for level in np.unique(data.columns["cat_0"]):
            m = data.columns["cat_0"] == level
            if data.treatment[m].std() == 0:
                continue
            sub_tol = 3.0 / math.sqrt(int(m.sum()))
            assert abs(np.corrcoef(resid[m], t[m])[0, 1]) < sub_tol


def oracle_problem(seed=0):
    spec = SynthSpec(
        n=1000,
        n_categorical=2,
        n_numerical=1,
        n_levels=2,
        seed=seed,
        planted_rule=(RuleClause(covariate="num_0", lo=0.0, hi=None),),
        planted_effect=4.0,
        background_effect=0.0,
        noise_sd=1.0,
        treatment_coeffs=(0.3, 0.0, 0.4),
    )
    data, truth = generate_synthetic(spec)
    schema, matrix = binarize(data, bucket_count=4)  # 2 + 2 + 4 = 8 atoms
    model = fit_propensity(data, matrix)
    return data, truth, schema, matrix, model


class TestExhaustiveFront:
    def test_candidate_combinatorics(self):
        # d=8, max_atoms=2 -> 8 single-atom + 28 pair genomes
        assert math.comb(8, 1) + math.comb(8, 2) == 36

    def test_front_is_mutually_non_dominated(self):
        data, truth, schema, matrix, model = oracle_problem()
        front = exhaustive_front(
            data, matrix, model, max_atoms=2, min_coverage=50, max_length=2, min_group=10
        )
        assert matrix.d == 8
        for a in front:
            for b in front:
                if a is not b:
                    assert not dominates(a.objectives, b.objectives)

    def test_agrees_with_independent_candidate_evaluation(self):
        """Cross-module oracle: enumerate candidates with evaluate_subgroup
        one at a time, peel front 1, and compare objective multisets."""
        data, truth, schema, matrix, model = oracle_problem(seed=1)
        front = exhaustive_front(
            data, matrix, model, max_atoms=2, min_coverage=50, max_length=2, min_group=10
        )
        objs = []
        for k in (1, 2):
            for combo in itertools.combinations(range(matrix.d), k):
                genome = np.zeros(matrix.d, dtype=bool)
                genome[list(combo)] = True
                sg = Subgroup(genome=genome, id="cand", origin="user-defined")
                try:
                    m = evaluate_subgroup(sg, data, matrix, model, min_group=10)
                except EffectNotIdentifiable:
                    continue
                if m.coverage_count >= 50 and m.antecedent_len <= 2:
                    objs.append((-m.tau, m.var0, m.var1))
        fronts = non_dominated_sort(np.array(objs))
        expected = sorted(tuple(objs[i]) for i in fronts[0])
        got = sorted(m.objectives for m in front)
        assert len(got) == len(expected)
        np.testing.assert_allclose(np.array(got), np.array(expected), rtol=1e-12)

    def test_d_too_large_rejected(self):
        data, truth, schema, matrix, model = oracle_problem()
        big = np.zeros((matrix.n, 15), dtype=np.uint8)
        from cprism.dataset import BinaryAtomMatrix

        bad = BinaryAtomMatrix(
            values=big, covariate_index=np.arange(15), unit_ids=matrix.unit_ids
        )
        with pytest.raises(SynthError, match="14"):
            exhaustive_front(data, bad, model)


class TestBenchMetrics:
    def _member(self, objs, length=2, cov_pct=10.0):
        from cprism.discovery import RankedSubgroup
        from cprism.estimators import SubgroupMetrics

        metrics = SubgroupMetrics(
            tau=-objs[0],
            var0=objs[1],
            var1=objs[2],
            coverage_count=100,
            coverage_pct=cov_pct,
            antecedent_len=length,
            n_treated=50,
            n_control=50,
            mean0=0.0,
            mean1=-objs[0],
        )
        return RankedSubgroup(
            subgroup=Subgroup(genome=np.ones(3, dtype=bool), id="x", origin="discovered"),
            metrics=metrics,
            objectives=tuple(objs),
            crowding=1.0,
        )

    def test_undominated_front_has_precision_one(self):
        ours = [self._member((1.0, 1.0, 1.0))]
        pooled = [ours, [self._member((2.0, 2.0, 2.0))]]
        m = bench_metrics(ours, pooled)
        assert m.precision == 1.0
        assert m.n_subgroups == 1

    def test_dominated_front_has_precision_zero(self):
        ours = [self._member((2.0, 2.0, 2.0))]
        pooled = [ours, [self._member((1.0, 1.0, 1.0))]]
        assert bench_metrics(ours, pooled).precision == 0.0

    def test_empty_front_rejected(self):
        with pytest.raises(SynthError):
            bench_metrics([], [])

    def test_ga_precision_against_oracle(self):
        data, truth, schema, matrix, model = oracle_problem(seed=2)
        params = SearchParams(
            population=40,
            generations=40,
            min_coverage=50,
            max_length=2,
            min_group=10,
            seed=5,
        )
        result = discover(data, matrix, model, params)
        oracle = exhaustive_front(
            data, matrix, model, max_atoms=2, min_coverage=50, max_length=2, min_group=10
        )
        m = bench_metrics(result.front1, [result.front1, oracle])
        assert m.precision >= 0.9
