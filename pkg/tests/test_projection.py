import numpy as np
import pytest

from cprism.dataset import CATEGORICAL, NUMERICAL
from cprism.projection import gower_distance, nmds, project_dataset, stress_1
from conftest import make_dataset


class TestGower:
    def test_identical_units_distance_zero(self):
        data = make_dataset(
            columns={"a": ["x", "x"], "b": [3.0, 3.0], "c": [1.0, 5.0]},
            kinds={"a": CATEGORICAL, "b": NUMERICAL, "c": NUMERICAL},
            treatment=[1, 0],
            outcome=[0.0, 1.0],
        )
        D = gower_distance(data)
        assert D[0, 1] == pytest.approx(1.0 / 3.0)  # only c differs, at full range
        same = make_dataset(
            columns={"a": ["x", "x"], "b": [3.0, 3.0]},
            kinds={"a": CATEGORICAL, "b": NUMERICAL},
            treatment=[1, 0],
            outcome=[0.0, 1.0],
        )
        assert gower_distance(same)[0, 1] == 0.0

    def test_full_categorical_mismatch_is_one(self):
        data = make_dataset(
            columns={"a": ["x", "y"], "b": ["p", "q"]},
            kinds={"a": CATEGORICAL, "b": CATEGORICAL},
            treatment=[1, 0],
            outcome=[0.0, 1.0],
        )
        assert gower_distance(data)[0, 1] == pytest.approx(1.0)

    def test_mixed_hand_example(self):
        # one categorical mismatch + one numerical at half range -> 0.75
        data = make_dataset(
            columns={"a": ["x", "y", "x"], "b": [0.0, 5.0, 10.0]},
            kinds={"a": CATEGORICAL, "b": NUMERICAL},
            treatment=[1, 0, 1],
            outcome=[0.0, 1.0, 0.0],
        )
        D = gower_distance(data)
        assert D[0, 1] == pytest.approx((1.0 + 0.5) / 2.0)

    def test_treatment_and_outcome_excluded(self):
        data = make_dataset(
            columns={"a": ["x", "x"]},
            kinds={"a": CATEGORICAL},
            treatment=[1, 0],
            outcome=[0.0, 100.0],
        )
        assert gower_distance(data)[0, 1] == 0.0

    def test_constant_numerical_contributes_zero(self):
        data = make_dataset(
            columns={"a": [5.0, 5.0], "b": [0.0, 1.0]},
            kinds={"a": NUMERICAL, "b": NUMERICAL},
            treatment=[1, 0],
            outcome=[0.0, 1.0],
        )
        assert gower_distance(data)[0, 1] == pytest.approx(0.5)


class TestNmds:
    def test_equilateral_triangle(self):
        D = np.ones((3, 3)) - np.eye(3)
        layout = nmds(D, seed=0, tol=1e-12, max_iter=2000)
        dists = [
            np.linalg.norm(layout.coords[a] - layout.coords[b])
            for a, b in ((0, 1), (0, 2), (1, 2))
        ]
        assert layout.final_stress < 1e-3
        spread = (max(dists) - min(dists)) / max(dists)
        assert spread < 1e-3

    def test_collinear_input_reaches_zero_stress(self):
        D = np.array([[0, 1, 2], [1, 0, 1], [2, 1, 0]], dtype=float)
        layout = nmds(D, seed=0, tol=1e-12, max_iter=2000)
        assert layout.final_stress < 1e-3

    def test_stress_monotone_non_increasing(self):
        rng = np.random.default_rng(4)
        pts = rng.random((20, 5))
        D = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1))
        layout = nmds(D, seed=1)
        hist = np.array(layout.stress_history)
        assert (np.diff(hist) <= 1e-15).all()

    def test_all_zero_distances(self):
        D = np.zeros((4, 4))
        with pytest.warns(UserWarning, match="zero"):
            layout = nmds(D, seed=0)
        assert layout.final_stress == 0.0
        assert (layout.coords == 0).all()

    def test_duplicate_units_land_together(self):
        rng = np.random.default_rng(1)
        pts = rng.random((6, 3))
        pts = np.vstack([pts, pts[0]])
        D = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1))
        layout = nmds(D, seed=2, tol=1e-12, max_iter=3000)
        assert np.linalg.norm(layout.coords[0] - layout.coords[6]) < 1e-6

    def test_final_stress_matches_independent_recompute(self):
        rng = np.random.default_rng(7)
        pts = rng.random((15, 4))
        D = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1))
        layout = nmds(D, seed=3)
        assert stress_1(D, layout.coords) == pytest.approx(layout.final_stress, abs=1e-9)

    def test_rotation_translation_invariance_of_stress(self):
        rng = np.random.default_rng(8)
        pts = rng.random((10, 3))
        D = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1))
        layout = nmds(D, seed=4)
        theta = 0.37
        rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
        moved = layout.coords @ rot.T + np.array([3.0, -2.0])
        assert stress_1(D, moved) == pytest.approx(layout.final_stress, abs=1e-12)

    def test_deterministic_under_seed(self):
        rng = np.random.default_rng(9)
        pts = rng.random((12, 3))
        D = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1))
        a = nmds(D, seed=5)
        b = nmds(D, seed=5)
        assert (a.coords == b.coords).all()
        assert a.final_stress == b.final_stress

    def test_needs_three_units(self):
        with pytest.raises(ValueError):
            nmds(np.zeros((2, 2)))

    def test_asymmetric_rejected(self):
        D = np.array([[0.0, 1.0, 2.0], [1.0, 0.0, 1.0], [2.5, 1.0, 0.0]])
        with pytest.raises(ValueError, match="symmetric"):
            nmds(D)


class TestProjectDataset:
    def _data(self, n=40, seed=0):
        rng = np.random.default_rng(seed)
        return make_dataset(
            columns={
                "a": [str(v) for v in rng.integers(0, 3, size=n)],
                "b": rng.standard_normal(n),
            },
            kinds={"a": CATEGORICAL, "b": NUMERICAL},
            treatment=[1, 0] * (n // 2),
            outcome=rng.standard_normal(n),
        )

    def test_layout_contract(self):
        data = self._data()
        doc = project_dataset(data, member_masks={"sg1": np.arange(40) < 10})
        assert set(doc) == {"points", "stress"}
        assert len(doc["points"]) == 40
        first = doc["points"][0]
        assert set(first) == {"id", "x", "y", "subgroups"}
        assert first["subgroups"] == ["sg1"]
        assert doc["points"][-1]["subgroups"] == []

    def test_subsample_caps_units_and_keeps_members(self):
        data = self._data(n=60)
        mask = np.zeros(60, dtype=bool)
        mask[:6] = True
        doc = project_dataset(data, member_masks={"sg": mask}, cap=30)
        assert len(doc["points"]) <= 30
        assert any("sg" in p["subgroups"] for p in doc["points"])

    def test_projection_deterministic(self):
        data = self._data(n=30, seed=3)
        a = project_dataset(data, seed=11)
        b = project_dataset(data, seed=11)
        assert a == b
