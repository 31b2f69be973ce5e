"""File formats and the command-line surface."""

import json
import math
import os

import numpy as np
import pytest

import chainalign as ca
from chainalign import formats
from chainalign.cli import main

MODELS = os.path.join(os.path.dirname(__file__), "..", "models")
IID = os.path.join(MODELS, "reference_iid.json")
MARKOV = os.path.join(MODELS, "reference_markov.json")
POSITIVE = os.path.join(MODELS, "positive_drift.json")


class TestModelFile:
    def test_load_reference(self):
        m = formats.load_model(IID)
        assert m.alphabet_size == 2
        assert m.symbols == ("A", "B")
        assert m.lattice

    def test_round_trip(self, tmp_path):
        m = formats.load_model(MARKOV)
        p = tmp_path / "m.json"
        formats.save_model(str(p), m)
        m2 = formats.load_model(str(p))
        assert np.array_equal(m.P, m2.P)
        assert np.array_equal(m.score.table, m2.score.table)
        assert formats.model_sha256(m) == formats.model_sha256(m2)

    def test_unknown_key_rejected(self, tmp_path):
        p = tmp_path / "bad.json"
        doc = json.load(open(IID))
        doc["scale"] = 2
        p.write_text(json.dumps(doc))
        with pytest.raises(ca.ModelFileError, match="scale"):
            formats.load_model(str(p))

    def test_parse_error_has_line(self, tmp_path):
        p = tmp_path / "broken.json"
        p.write_text('{\n  "alphabet": 2,\n  oops\n}')
        with pytest.raises(ca.ModelFileError, match="line 3"):
            formats.load_model(str(p))

    def test_missing_file(self):
        with pytest.raises(ca.ModelFileError, match="not found"):
            formats.load_model("/nonexistent/m.json")

    def test_invalid_model_content(self, tmp_path):
        p = tmp_path / "per.json"
        doc = {
            "alphabet": 2,
            "P": [[0, 1], [1, 0]],
            "Q": [[0.5, 0.5], [0.5, 0.5]],
            "score": {"pair": [[1, -2], [-2, 1]]},
        }
        p.write_text(json.dumps(doc))
        with pytest.raises(ca.ModelError):
            formats.load_model(str(p))

    def test_transition_table(self, tmp_path):
        rng = np.random.default_rng(0)
        f4 = rng.normal(size=(2, 2, 2, 2)).tolist()
        doc = {
            "alphabet": 2,
            "P": [[0.5, 0.5], [0.5, 0.5]],
            "Q": [[0.5, 0.5], [0.5, 0.5]],
            "score": {"transition": f4},
        }
        p = tmp_path / "t.json"
        p.write_text(json.dumps(doc))
        m = formats.load_model(str(p))
        assert m.is_transition
        assert not m.lattice


class TestSequenceFile:
    def test_symbols(self, tmp_path):
        m = formats.load_model(IID)
        p = tmp_path / "seqs.txt"
        p.write_text("ABBA\nBAB\n")
        seqs = formats.load_sequences(str(p), m)
        assert [s.tolist() for s in seqs] == [[0, 1, 1, 0], [1, 0, 1]]

    def test_bad_symbol_position(self, tmp_path):
        m = formats.load_model(IID)
        p = tmp_path / "seqs.txt"
        p.write_text("ABXA\n")
        with pytest.raises(ca.ModelFileError, match="line 1, position 3"):
            formats.load_sequences(str(p), m)

    def test_indices(self, tmp_path):
        m = ca.validate_model(3, np.full((3, 3), 1 / 3), np.full((3, 3), 1 / 3), np.eye(3) * 2 - 1)
        p = tmp_path / "seqs.txt"
        p.write_text("0 2 1\n\n1 1\n")
        seqs = formats.load_sequences(str(p), m)
        assert [s.tolist() for s in seqs] == [[0, 2, 1], [1, 1]]

    def test_index_out_of_range(self, tmp_path):
        m = ca.validate_model(2, [[0.5, 0.5]] * 2, [[0.5, 0.5]] * 2, [[1, -1], [-1, 1]])
        p = tmp_path / "seqs.txt"
        p.write_text("0 2\n")
        with pytest.raises(ca.ModelFileError, match="token 2"):
            formats.load_sequences(str(p), m)


class TestParamsCache:
    def test_round_trip(self, tmp_path):
        p = ca.GumbelParams(theta_star=0.48, K_star=0.1, lattice=True, K_star_stderr=0.001)
        path = tmp_path / "params.json"
        formats.save_params(str(path), p, {"seed": 1, "model_sha256": "abc"})
        p2, meta = formats.load_params(str(path))
        assert p2 == p
        assert meta["model_sha256"] == "abc"


class TestCmdParams:
    def test_reference_model(self, capsys):
        code = main(["params", "--model", IID])
        out = capsys.readouterr().out
        assert code == 0
        assert "0.4812118250596" in out
        assert "condition verdict: pass" in out

    def test_positive_drift_exit_2(self, capsys):
        code = main(["params", "--model", POSITIVE])
        out = capsys.readouterr().out
        assert code == 2
        assert "DriftNotNegative" in out

    def test_missing_file_exit_1(self, capsys):
        code = main(["params", "--model", "/nope/m.json"])
        assert code == 1

    def test_k_star_and_cache(self, tmp_path, capsys):
        cache = tmp_path / "cache.json"
        code = main([
            "params", "--model", IID, "--seed", "7", "--replicates", "20000",
            "--tail-reps", "5000", "--params-cache-out", str(cache),
        ])
        out = capsys.readouterr().out
        assert code == 0
        assert "K* = " in out
        params, meta = formats.load_params(str(cache))
        assert params.lattice
        assert 0.05 < params.K_star < 0.2
        assert meta["seed"] == 7

    def test_seed_required_for_k(self, capsys):
        code = main(["params", "--model", IID, "--replicates", "1000"])
        assert code == 1
        assert "seed" in capsys.readouterr().err.lower()


class TestCmdAlign:
    @pytest.fixture()
    def cache(self, tmp_path):
        cache = tmp_path / "cache.json"
        main([
            "params", "--model", IID, "--seed", "7", "--replicates", "20000",
            "--tail-reps", "5000", "--params-cache-out", str(cache),
        ])
        return str(cache)

    def test_toy_alignment(self, tmp_path, capsys, cache):
        fx = tmp_path / "x.txt"
        fy = tmp_path / "y.txt"
        fx.write_text("AAB\n")
        fy.write_text("ABA\n")
        capsys.readouterr()
        code = main([
            "align", "--model", IID, "--x", str(fx), "--y", str(fy),
            "--params-cache", cache, "--t", "1",
        ])
        out = capsys.readouterr().out
        assert code == 0
        assert "M_n = 2.0" in out
        assert "C_n(1.0) = 1" in out
        assert "1,0,2,2.0" in out  # the (1,0) excursion row

    def test_empty_sequence(self, tmp_path, capsys, cache):
        fx = tmp_path / "x.txt"
        fy = tmp_path / "y.txt"
        fx.write_text("\nA\n")  # first non-empty line is "A"
        fy.write_text("A\n")
        code = main(["align", "--model", IID, "--x", str(fx), "--y", str(fy),
                     "--params-cache", cache])
        out = capsys.readouterr().out
        assert code == 0
        assert "M_n = 1.0" in out

    def test_identical_sequences_tiny_p(self, tmp_path, capsys, cache):
        fx = tmp_path / "x.txt"
        seq = "AB" * 150
        fx.write_text(seq + "\n")
        code = main(["align", "--model", IID, "--x", str(fx), "--y", str(fx),
                     "--params-cache", cache])
        out = capsys.readouterr().out
        assert code == 0
        pv = float(out.split("p-value = ")[1].splitlines()[0])
        assert pv < 1e-10

    def test_wrong_model_cache_rejected(self, tmp_path, capsys, cache):
        fx = tmp_path / "x.txt"
        fx.write_text("AA\n")
        code = main(["align", "--model", MARKOV, "--x", str(fx), "--y", str(fx),
                     "--params-cache", cache])
        assert code == 1
        assert "different model" in capsys.readouterr().err


class TestCmdValidate:
    def test_grid_and_determinism(self, tmp_path, capsys):
        out1 = tmp_path / "a.csv"
        out2 = tmp_path / "b.csv"
        args = [
            "validate", "--model", IID, "--seed", "11", "--replicates", "40",
            "--n", "120", "--n", "200", "--x", "0", "--x", "1",
            "--output", None, "--format", "csv",
        ]
        a1 = args[:-4] + ["--output", str(out1), "--format", "csv"]
        a2 = args[:-4] + ["--output", str(out2), "--format", "csv"]
        assert main(a1) == 0
        assert main(a2) == 0
        b1 = out1.read_bytes()
        assert b1 == out2.read_bytes()
        lines = b1.decode().splitlines()
        assert lines[0].startswith("# chainalign")
        assert "seed=11" in lines[1]
        assert lines[2] == ",".join(formats.CSV_COLUMNS)
        assert len(lines) == 3 + 4  # 2 n-values x 2 x-values

    def test_json_lines(self, tmp_path, capsys):
        out = tmp_path / "r.jsonl"
        code = main([
            "validate", "--model", IID, "--seed", "11", "--replicates", "30",
            "--n", "100", "--x", "0", "--format", "json-lines", "--output", str(out),
        ])
        assert code == 0
        lines = out.read_text().splitlines()
        meta = json.loads(lines[0])["meta"]
        assert meta["seed"] == 11
        row = json.loads(lines[1])
        assert row["n"] == 100
        assert sum(row["counts_hist"]) == 30

    def test_condition_gate(self, tmp_path, capsys):
        out = tmp_path / "r.csv"
        doc = {
            "alphabet": 2,
            "P": [[0.6582482041831537, 0.34175179581684634],
                  [0.24289088111443186, 0.7571091188855681]],
            "Q": [[0.3285068277935225, 0.6714931722064774],
                  [0.7695194870973499, 0.23048051290265015]],
            "score": {"pair": [[3, 3], [-5, -4]]},
        }
        bad = tmp_path / "fail_model.json"
        bad.write_text(json.dumps(doc))
        code = main([
            "validate", "--model", str(bad), "--seed", "1", "--replicates", "10",
            "--n", "100", "--x", "0", "--output", str(out),
        ])
        assert code == 2
        assert "ConditionNotVerified" in capsys.readouterr().err
        code = main([
            "validate", "--model", str(bad), "--seed", "1", "--replicates", "10",
            "--n", "100", "--x", "0", "--output", str(out), "--override-conditions",
        ])
        assert code == 0

    def test_default_grid_shape(self):
        # the documented default grid is 3 lengths x 4 thresholds = 12 rows
        from chainalign.cli import DEFAULT_NS, DEFAULT_XS

        assert len(DEFAULT_NS) * len(DEFAULT_XS) == 12


class TestExitCodes:
    def test_unresolved_exit_3(self, monkeypatch, capsys):
        import chainalign.cli as cli_mod
        from chainalign.conditions import ConditionReport

        def fake_verdict(tilted):
            return ConditionReport(
                theta_star=tilted.theta_star, mu_star=tilted.mu_star,
                sufficient_pass=False, phi1_gstar=1.1, phi2_gstar=1.1,
                J1=0.1, J2=0.1, J1_status="unresolved", J2_status="unresolved",
                condition12="unresolved",
            )

        monkeypatch.setattr(cli_mod, "condition_verdict", fake_verdict)
        code = main(["params", "--model", MARKOV])
        out = capsys.readouterr().out
        assert code == 3
        assert "condition verdict: unresolved" in out

    def test_validate_unequal_lengths(self, tmp_path):
        out = tmp_path / "r.jsonl"
        code = main([
            "validate", "--model", IID, "--seed", "3", "--replicates", "20",
            "--nx", "150", "--ny", "80", "--x", "0", "--format", "json-lines",
            "--output", str(out), "--override-conditions",
        ])
        assert code == 0
        row = json.loads(out.read_text().splitlines()[1])
        assert row["n"] == 150 and row["n_y"] == 80


def test_invalid_model_file_exit_1(tmp_path, capsys):
    doc = {
        "alphabet": 2,
        "P": [[0, 1], [1, 0]],   # periodic
        "Q": [[0.5, 0.5], [0.5, 0.5]],
        "score": {"pair": [[1, -2], [-2, 1]]},
    }
    p = tmp_path / "per.json"
    p.write_text(json.dumps(doc))
    assert main(["params", "--model", str(p)]) == 1
    assert "period" in capsys.readouterr().err
