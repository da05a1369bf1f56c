import json

import pytest

from cprism.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def write_spec(tmp_path, **overrides):
    spec = {
        "n": 1000,
        "n_categorical": 2,
        "n_numerical": 1,
        "n_levels": 2,
        "planted_rule": [{"covariate": "num_0", "lo": 0.0}],
        "planted_effect": 4.0,
        "background_effect": 0.0,
        "noise_sd": 1.0,
        "treatment_coeffs": [0.3, 0.0, 0.4],
        "seed": 1,
    }
    spec.update(overrides)
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(spec))
    return path


class TestSynth:
    def test_syn1_csv_line_count(self, tmp_path, capsys):
        spec = {
            "n": 3000,
            "n_categorical": 5,
            "n_numerical": 5,
            "planted_rule": [{"covariate": "num_0", "lo": 0.0}],
            "seed": 2,
        }
        spec_path = tmp_path / "spec.json"
        spec_path.write_text(json.dumps(spec))
        out_csv = tmp_path / "data.csv"
        truth = tmp_path / "truth.json"
        code, out, _ = run(
            capsys, "synth", "--spec", str(spec_path), "--out", str(out_csv), "--truth", str(truth)
        )
        assert code == 0
        lines = out_csv.read_text().strip().split("\n")
        assert len(lines) == 3001  # header + 3000 rows
        doc = json.loads(truth.read_text())
        assert len(doc["membership"]) == 3000
        summary = json.loads(out)
        assert summary["command"] == "synth" and summary["rows"] == 3000

    def test_seed_override_changes_data(self, tmp_path, capsys):
        spec = write_spec(tmp_path)
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        run(capsys, "synth", "--spec", str(spec), "--out", str(a), "--seed", "7")
        run(capsys, "synth", "--spec", str(spec), "--out", str(b), "--seed", "8")
        assert a.read_bytes() != b.read_bytes()


class TestDiscover:
    def test_byte_identical_under_same_seed(self, tmp_path, capsys):
        spec = write_spec(tmp_path)
        data = tmp_path / "data.csv"
        run(capsys, "synth", "--spec", str(spec), "--out", str(data))
        cfg = tmp_path / "cfg.json"
        cfg.write_text(
            json.dumps(
                {
                    "treatment": "treatment",
                    "outcome": "outcome",
                    "search": {
                        "population": 30,
                        "generations": 15,
                        "min_coverage": "10%",
                        "max_length": 2,
                        "min_group": 10,
                    },
                }
            )
        )
        f1, f2 = tmp_path / "front1.json", tmp_path / "front2.json"
        code, out, _ = run(
            capsys, "discover", "--data", str(data), "--config", str(cfg),
            "--out", str(f1), "--seed", "42",
        )
        assert code == 0
        run(
            capsys, "discover", "--data", str(data), "--config", str(cfg),
            "--out", str(f2), "--seed", "42",
        )
        assert f1.read_bytes() == f2.read_bytes()
        doc = json.loads(f1.read_text())
        assert doc["fronts"] and doc["stop_reason"] in ("max_generations", "stagnation")
        for front in doc["fronts"]:
            for entry in front:
                assert entry["metrics"]["length"] <= 2

    def test_different_seed_changes_output(self, tmp_path, capsys):
        spec = write_spec(tmp_path)
        data = tmp_path / "data.csv"
        run(capsys, "synth", "--spec", str(spec), "--out", str(data))
        cfg = tmp_path / "cfg.json"
        cfg.write_text(
            json.dumps(
                {
                    "treatment": "treatment",
                    "outcome": "outcome",
                    "search": {
                        "population": 20,
                        "generations": 8,
                        "min_coverage": "10%",
                        "max_length": 2,
                        "min_group": 10,
                    },
                }
            )
        )
        f1, f2 = tmp_path / "s1.json", tmp_path / "s2.json"
        c1, out1, _ = run(
            capsys, "discover", "--data", str(data), "--config", str(cfg), "--out", str(f1), "--seed", "1"
        )
        c2, out2, _ = run(
            capsys, "discover", "--data", str(data), "--config", str(cfg), "--out", str(f2), "--seed", "2"
        )
        assert c1 == 0 and c2 == 0
        assert json.loads(out1)["seed"] == 1 and json.loads(out2)["seed"] == 2
        assert json.loads(f1.read_text())["fronts"]
        assert json.loads(f2.read_text())["fronts"]


class TestBench:
    def test_planted_fixture_reaches_precision(self, tmp_path, capsys):
        spec = write_spec(tmp_path)
        data = tmp_path / "data.csv"
        run(capsys, "synth", "--spec", str(spec), "--out", str(data))
        out_csv = tmp_path / "bench.csv"
        code, out, _ = run(
            capsys,
            "bench",
            "--data", str(data),
            "--oracle-max-atoms", "2",
            "--out", str(out_csv),
            "--seed", "5",
        )
        assert code == 0
        lines = out_csv.read_text().strip().split("\n")
        assert lines[0] == "dataset,method,P,S,L,C"
        ours = [ln for ln in lines if ",ours," in ln][0]
        precision = float(ours.split(",")[2])
        assert precision >= 0.9
        assert (tmp_path / "bench.md").exists()
        summary = json.loads(out)
        assert summary["precision"] >= 0.9


class TestMatchProject:
    def test_match_and_project_outputs(self, tmp_path, capsys):
        spec = write_spec(tmp_path, n=300)
        data = tmp_path / "data.csv"
        run(capsys, "synth", "--spec", str(spec), "--out", str(data))
        sg = tmp_path / "sg.json"
        sg.write_text(
            json.dumps(
                {
                    "id": "sg",
                    "origin": "user-defined",
                    "atoms": [{"covariate": "num_0", "op": "in_range", "value": [0.0, None]}],
                }
            )
        )
        report = tmp_path / "report.json"
        code, out, _ = run(
            capsys, "match", "--data", str(data), "--subgroup", str(sg),
            "--epsilon", "0.1", "--out", str(report),
        )
        assert code == 0
        doc = json.loads(report.read_text())
        assert doc["n_pairs"] >= 1
        assert all(p["gap"] <= 0.1 for p in doc["pairs"])

        layout = tmp_path / "layout.json"
        code, out, _ = run(capsys, "project", "--data", str(data), "--out", str(layout))
        assert code == 0
        doc = json.loads(layout.read_text())
        assert len(doc["points"]) == 300
        assert doc["stress"] >= 0


class TestExitCodes:
    def test_usage_error_is_1(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["discover"])  # missing required --data/--out
        assert exc.value.code == 1

    def test_unknown_subcommand_is_1(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 1

    def test_data_error_is_2(self, tmp_path, capsys):
        code, _, err = run(
            capsys, "discover", "--data", str(tmp_path / "missing.csv"),
            "--out", str(tmp_path / "x.json"),
        )
        assert code == 2
        assert "error" in err.lower()

    def test_bad_csv_is_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("a,b\n1,2\n")
        code, _, err = run(
            capsys, "discover", "--data", str(bad), "--out", str(tmp_path / "x.json")
        )
        assert code == 2

    def test_no_partial_output_on_failure(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("a,b\n1,2\n")
        out = tmp_path / "front.json"
        run(capsys, "discover", "--data", str(bad), "--out", str(out))
        assert not out.exists()
