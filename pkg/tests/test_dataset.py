import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cprism.dataset import (
    CATEGORICAL,
    NUMERICAL,
    IngestError,
    Subgroup,
    SubgroupError,
    all_units_subgroup,
    antecedent_length,
    binarize,
    cover,
    cover_mask_bool,
    ingest_csv,
    merge_subgroups,
    split_subgroup,
    subgroup_from_json,
    subgroup_to_json,
)
from conftest import make_dataset

CSV_4ROW = b"""age,sex,T,Y
20,female,yes,3
30,male,no,1
15,female,yes,5
40,male,no,2
"""


def _subgroup(schema, atom_indices, sid="s"):
    genome = np.zeros(schema.d, dtype=bool)
    genome[list(atom_indices)] = True
    return Subgroup(genome=genome, id=sid, origin="user-defined")


class TestIngest:
    def test_four_row_csv_maps_yes_to_one(self):
        data = ingest_csv(CSV_4ROW, {"treatment": "T", "outcome": "Y"})
        assert data.n == 4
        assert int(data.treatment.sum()) == 2
        # "yes" > "no" lexicographically, so yes -> 1 without config
        assert data.report.treatment_mapping == {"no": 0, "yes": 1}

    def test_positive_value_override(self):
        data = ingest_csv(
            CSV_4ROW, {"treatment": "T", "outcome": "Y", "positive_value": "no"}
        )
        assert data.report.treatment_mapping == {"no": 1, "yes": 0}
        assert int(data.treatment.sum()) == 2

    def test_missing_outcome_row_dropped_and_counted(self):
        csv = b"age,T,Y\n20,yes,3\n30,no,\n40,no,1\n50,yes,2\n"
        data = ingest_csv(csv, {"treatment": "T", "outcome": "Y"})
        assert data.n == 3
        assert data.report.n_rows_dropped == 1
        # unit ids keep the source row positions
        assert data.unit_ids.tolist() == [0, 2, 3]

    def test_syn1_shape_roundtrip(self):
        from cprism.synth import generate_synthetic, syn_table_spec

        dataset, _ = generate_synthetic(syn_table_spec("syn-1", seed=5))
        csv = dataset.to_dataframe().reset_index(drop=True).to_csv(index=False)
        again = ingest_csv(csv.encode(), {"treatment": "treatment", "outcome": "outcome"})
        assert again.n == 3000
        assert len(again.schema) == 10

    def test_missing_covariates_imputed(self):
        csv = b"age,color,T,Y\n20,red,1,1\n,blue,0,2\n30,,1,3\n40,red,0,4\n"
        data = ingest_csv(csv, {"treatment": "T", "outcome": "Y"})
        assert data.report.imputed == {"age": 1, "color": 1}
        assert data.columns["color"][2] == "missing"
        # median of {20, 30, 40}
        assert data.columns["age"][1] == 30.0

    def test_treatment_with_three_values_rejected(self):
        csv = b"x,T,Y\n1,a,1\n2,b,2\n3,c,3\n"
        with pytest.raises(IngestError, match="distinct"):
            ingest_csv(csv, {"treatment": "T", "outcome": "Y"})

    def test_non_numeric_outcome_rejected(self):
        csv = b"x,T,Y\n1,a,foo\n2,b,bar\n"
        with pytest.raises(IngestError, match="not numeric"):
            ingest_csv(csv, {"treatment": "T", "outcome": "Y"})

    def test_all_treated_rejected(self):
        csv = b"x,T,Y\n1,a,1\n2,a,2\n"
        with pytest.raises(IngestError):
            ingest_csv(csv, {"treatment": "T", "outcome": "Y"})

    def test_zero_usable_rows(self):
        csv = b"x,T,Y\n1,,1\n2,,2\n"
        with pytest.raises(IngestError):
            ingest_csv(csv, {"treatment": "T", "outcome": "Y"})


class TestBinarize:
    def test_categorical_one_hot(self):
        data = make_dataset(
            columns={"color": ["red", "blue", "red", "blue"]},
            kinds={"color": CATEGORICAL},
            treatment=[1, 0, 1, 0],
            outcome=[1.0, 2.0, 3.0, 4.0],
        )
        schema, matrix = binarize(data)
        assert [a.label() for a in schema.atoms] == ["color=blue", "color=red"]
        assert matrix.check_partition()

    def test_quantile_edges_match_sample_quartiles(self):
        rng = np.random.default_rng(42)
        ages = rng.uniform(1, 100, size=400)
        data = make_dataset(
            columns={"age": ages},
            kinds={"age": NUMERICAL},
            treatment=[1, 0] * 200,
            outcome=np.zeros(400),
        )
        schema, matrix = binarize(data, bucket_count=4)
        expected = np.quantile(ages, [0.25, 0.5, 0.75])  # independent oracle
        assert len(schema.atoms) == 4
        inner_edges = [a.hi for a in schema.atoms[:-1]]
        np.testing.assert_allclose(inner_edges, expected)
        assert matrix.check_partition()

    def test_constant_column_single_atom_with_warning(self):
        data = make_dataset(
            columns={"x": [7.0, 7.0, 7.0, 7.0]},
            kinds={"x": NUMERICAL},
            treatment=[1, 0, 1, 0],
            outcome=[1.0, 2.0, 3.0, 4.0],
        )
        with pytest.warns(UserWarning, match="constant"):
            schema, matrix = binarize(data)
        assert schema.d == 1
        assert matrix.values.all()

    def test_bucket_count_too_small(self, toy_dataset):
        with pytest.raises(ValueError):
            binarize(toy_dataset, bucket_count=1)

    def test_partition_property(self, toy_binarized):
        _, schema, matrix = toy_binarized
        assert matrix.check_partition()


class TestCover:
    def test_conjunction_across_covariates(self, toy_binarized):
        data, schema, matrix = toy_binarized
        # {10 < age <= 25} AND {sex = female}
        age_atoms = [
            int(j)
            for j in schema.atoms_of("age")
            if schema.atoms[int(j)].hi is not None and schema.atoms[int(j)].hi <= 25.5
        ]
        female = [int(j) for j in schema.atoms_of("sex") if schema.atoms[int(j)].value == "female"]
        sg = _subgroup(schema, age_atoms + female)
        covered = set(cover(sg, matrix).tolist())
        expected = {
            int(uid)
            for uid, age, sex in zip(
                data.unit_ids, data.columns["age"], data.columns["sex"]
            )
            if age <= 25 and sex == "female"
        }
        assert covered == expected
        assert (20.0, "female") in {
            (data.columns["age"][i], data.columns["sex"][i])
            for i, uid in enumerate(data.unit_ids)
            if uid in covered
        }

    def test_unit_outside_interval_not_covered(self, toy_binarized):
        data, schema, matrix = toy_binarized
        young = [int(schema.atoms_of("age")[0])]
        female = [int(j) for j in schema.atoms_of("sex") if schema.atoms[int(j)].value == "female"]
        sg = _subgroup(schema, young + female)
        covered = cover(sg, matrix)
        ages = {float(data.columns["age"][i]) for i, uid in enumerate(data.unit_ids) if uid in covered}
        assert all(a <= schema.atoms[young[0]].hi for a in ages)

    def test_within_covariate_disjunction(self):
        data = make_dataset(
            columns={"job": ["blue-collar", "retired", "teacher", "manager"]},
            kinds={"job": CATEGORICAL},
            treatment=[1, 0, 1, 0],
            outcome=[0.0, 1.0, 2.0, 3.0],
        )
        schema, matrix = binarize(data)
        picked = [
            int(j)
            for j in schema.atoms_of("job")
            if schema.atoms[int(j)].value in ("blue-collar", "retired")
        ]
        sg = _subgroup(schema, picked)
        assert set(cover(sg, matrix).tolist()) == {0, 1}

    def test_empty_genome_covers_all(self, toy_binarized):
        data, schema, matrix = toy_binarized
        assert len(cover(all_units_subgroup(schema.d), matrix)) == data.n

    def test_dimension_mismatch(self, toy_binarized):
        _, schema, matrix = toy_binarized
        bad = Subgroup(genome=np.ones(matrix.d + 1, dtype=bool), id="bad", origin="user-defined")
        with pytest.raises(SubgroupError):
            cover(bad, matrix)

    def test_singleton_atom_equals_naive_filter(self, toy_binarized):
        data, schema, matrix = toy_binarized
        for j, atom in enumerate(schema.atoms):
            sg = _subgroup(schema, [j])
            covered = set(cover(sg, matrix).tolist())
            col = data.columns[atom.covariate]
            if atom.op == "eq":
                naive = {int(u) for u, v in zip(data.unit_ids, col) if str(v) == atom.value}
            else:
                naive = {
                    int(u)
                    for u, v in zip(data.unit_ids, col)
                    if atom.lo < float(v) <= atom.hi
                }
            assert covered == naive

    def test_monotone_within_covariate_antitone_across(self, toy_binarized):
        data, schema, matrix = toy_binarized
        age = [int(j) for j in schema.atoms_of("age")]
        sex = [int(j) for j in schema.atoms_of("sex")]
        base = _subgroup(schema, [age[0]])
        grown = _subgroup(schema, [age[0], age[1]])
        crossed = _subgroup(schema, [age[0], sex[0]])
        c_base = set(cover(base, matrix).tolist())
        assert c_base <= set(cover(grown, matrix).tolist())
        assert set(cover(crossed, matrix).tolist()) <= c_base


class TestAntecedentLength:
    def test_two_covariates(self, toy_binarized):
        _, schema, _ = toy_binarized
        sg = _subgroup(schema, [int(schema.atoms_of("age")[0]), int(schema.atoms_of("sex")[0])])
        assert antecedent_length(sg, schema) == 2

    def test_empty_genome(self, toy_binarized):
        _, schema, _ = toy_binarized
        assert antecedent_length(all_units_subgroup(schema.d), schema) == 0

    def test_three_atoms_one_covariate(self, toy_binarized):
        _, schema, _ = toy_binarized
        age = [int(j) for j in schema.atoms_of("age")[:3]]
        assert antecedent_length(_subgroup(schema, age), schema) == 1


class TestMergeSplit:
    def test_merge_unions_within_shared_covariate(self, toy_binarized):
        _, schema, _ = toy_binarized
        age = [int(j) for j in schema.atoms_of("age")]
        a = _subgroup(schema, [age[0]], "a")
        b = _subgroup(schema, [age[1]], "b")
        merged = merge_subgroups(a, b, schema)
        assert merged.origin == "merged"
        assert set(np.flatnonzero(merged.genome).tolist()) == {age[0], age[1]}

    def test_merge_drops_one_sided_covariates(self, toy_binarized):
        _, schema, _ = toy_binarized
        age = [int(j) for j in schema.atoms_of("age")]
        sex = [int(j) for j in schema.atoms_of("sex")]
        a = _subgroup(schema, [age[0], sex[0]], "a")
        b = _subgroup(schema, [age[1]], "b")
        merged = merge_subgroups(a, b, schema)
        assert set(np.flatnonzero(merged.genome).tolist()) == {age[0], age[1]}

    def test_merge_coverage_superset(self, toy_binarized):
        data, schema, matrix = toy_binarized
        age = [int(j) for j in schema.atoms_of("age")]
        sex = [int(j) for j in schema.atoms_of("sex")]
        a = _subgroup(schema, [age[0], sex[0]], "a")
        b = _subgroup(schema, [age[2], sex[1]], "b")
        merged = merge_subgroups(a, b, schema)
        cm = set(cover(merged, matrix).tolist())
        ca = set(cover(a, matrix).tolist())
        cb = set(cover(b, matrix).tolist())
        assert cm >= ca | cb
        assert len(cm) >= max(len(ca), len(cb))

    def test_merge_disjoint_covariates_rejected(self, toy_binarized):
        _, schema, _ = toy_binarized
        a = _subgroup(schema, [int(schema.atoms_of("age")[0])], "a")
        b = _subgroup(schema, [int(schema.atoms_of("sex")[0])], "b")
        with pytest.raises(SubgroupError):
            merge_subgroups(a, b, schema)

    def test_merge_empty_antecedents_rejected(self, toy_binarized):
        _, schema, _ = toy_binarized
        a = all_units_subgroup(schema.d)
        with pytest.raises(SubgroupError):
            merge_subgroups(a, a, schema)

    def test_split_two_intervals(self, toy_binarized):
        _, schema, _ = toy_binarized
        age = [int(j) for j in schema.atoms_of("age")]
        s = _subgroup(schema, age[:2], "s")
        left, right = split_subgroup(s, "age", schema)
        assert left.origin == right.origin == "split"
        assert np.flatnonzero(left.genome).tolist() == [age[0]]
        assert np.flatnonzero(right.genome).tolist() == [age[1]]
        # split is inverted by merge
        again = merge_subgroups(left, right, schema)
        assert (again.genome == s.genome).all()

    def test_split_ceil_floor(self):
        data = make_dataset(
            columns={"job": ["A", "B", "C", "D"]},
            kinds={"job": CATEGORICAL},
            treatment=[1, 0, 1, 0],
            outcome=[0.0, 0.0, 0.0, 0.0],
        )
        schema, _ = binarize(data)
        abc = [int(j) for j in schema.atoms_of("job") if schema.atoms[int(j)].value in "ABC"]
        s = _subgroup(schema, abc, "s")
        left, right = split_subgroup(s, "job", schema)
        assert [schema.atoms[j].value for j in np.flatnonzero(left.genome)] == ["A", "B"]
        assert [schema.atoms[j].value for j in np.flatnonzero(right.genome)] == ["C"]

    def test_split_single_atom_rejected(self, toy_binarized):
        _, schema, _ = toy_binarized
        s = _subgroup(schema, [int(schema.atoms_of("age")[0])], "s")
        with pytest.raises(SubgroupError):
            split_subgroup(s, "age", schema)
        with pytest.raises(SubgroupError):
            split_subgroup(s, "nope", schema)


class TestSubgroupJson:
    def test_roundtrip(self, toy_binarized):
        _, schema, matrix = toy_binarized
        sg = _subgroup(
            schema, [int(schema.atoms_of("age")[1]), int(schema.atoms_of("sex")[0])], "sg1"
        )
        doc = subgroup_to_json(sg, schema)
        assert doc["id"] == "sg1"
        parsed, notes = subgroup_from_json(doc, schema)
        assert (parsed.genome == sg.genome).all()
        assert notes == []

    def test_range_snaps_to_atom_grid(self, toy_binarized):
        data, schema, matrix = toy_binarized
        lo = float(schema.atoms[int(schema.atoms_of("age")[0])].hi) + 0.1
        doc = {
            "id": "u1",
            "origin": "user-defined",
            "atoms": [{"covariate": "age", "op": "in_range", "value": [lo, 100.0]}],
        }
        parsed, notes = subgroup_from_json(doc, schema)
        assert parsed.genome.sum() >= 1
        assert len(notes) == 1 and "snapped" in notes[0]

    def test_empty_antecedent_rejected(self, toy_binarized):
        _, schema, _ = toy_binarized
        with pytest.raises(SubgroupError):
            subgroup_from_json({"id": "x", "atoms": []}, schema)

    def test_unknown_value_rejected(self, toy_binarized):
        _, schema, _ = toy_binarized
        with pytest.raises(SubgroupError):
            subgroup_from_json(
                {"id": "x", "atoms": [{"covariate": "sex", "op": "eq", "value": "robot"}]},
                schema,
            )

    def test_json_serializable(self, toy_binarized):
        _, schema, _ = toy_binarized
        sg = _subgroup(schema, [0], "sg")
        json.dumps(subgroup_to_json(sg, schema))


@given(
    st.lists(
        st.tuples(st.integers(0, 2), st.integers(0, 3), st.booleans()),
        min_size=4,
        max_size=40,
    )
)
def test_cover_monotone_growth_property(rows):
    """Adding an atom of an already-selected covariate never shrinks coverage."""
    n = len(rows)
    treatment = [1 if i % 2 == 0 else 0 for i in range(n)]
    data = make_dataset(
        columns={
            "a": [str(r[0]) for r in rows],
            "b": [str(r[1]) for r in rows],
        },
        kinds={"a": CATEGORICAL, "b": CATEGORICAL},
        treatment=treatment,
        outcome=[float(r[2]) for r in rows],
    )
    schema, matrix = binarize(data)
    a_atoms = [int(j) for j in schema.atoms_of("a")]
    if len(a_atoms) < 2:
        return
    small = _subgroup(schema, a_atoms[:1])
    grown = _subgroup(schema, a_atoms[:2])
    assert set(cover(small, matrix).tolist()) <= set(cover(grown, matrix).tolist())
