import csv
import json
import math
import subprocess
import sys

import pytest

from equivoq import BlockCode, EquivocationResult, OracleReport
from equivoq.cli import main, parse_values

HAMMING = [[0, 1], [1, 0]]


def write_instance(path, source=(0.5, 0.5), matrix=HAMMING, limit=0.0, rate=1.0, key_rate=0.0):
    doc = {"source": list(source), "distortion": {"matrix": matrix, "limit": limit}, "rate": rate,
           "key_rate": key_rate}
    path.write_text(json.dumps(doc))
    return str(path)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def h(p):
    return -(p * math.log2(p) + (1 - p) * math.log2(1 - p)) if 0 < p < 1 else 0.0


class TestRdCurve:
    def test_binary_curve(self, tmp_path):
        inst = write_instance(tmp_path / "i.json")
        out = tmp_path / "rd.csv"
        assert main(["rd-curve", "--instance", inst, "--points", "11", "--out", str(out)]) == 0
        rows = read_csv(out)
        assert rows[0] == ["distortion", "rate", "slope"]
        assert len(rows) == 12
        rates = [float(r[1]) for r in rows[1:]]
        assert all(b <= a for a, b in zip(rates, rates[1:]))
        for r in rows[1:]:
            assert float(r[1]) == pytest.approx(1 - h(float(r[0])), abs=1e-4)

    def test_malformed_json(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text('{"source": [0.5, 0.5],\n "rate": }')
        assert main(["rd-curve", "--instance", str(bad)]) == 2
        assert "line 2" in capsys.readouterr().err

    def test_bad_field_named(self, tmp_path, capsys):
        inst = write_instance(tmp_path / "i.json", source=(0.5, 0.6))
        assert main(["rd-curve", "--instance", inst]) == 2
        assert "'source'" in capsys.readouterr().err

    def test_missing_field(self, tmp_path, capsys):
        p = tmp_path / "i.json"
        p.write_text(json.dumps({"source": [1.0], "distortion": {"matrix": [[0]], "limit": 0}, "rate": 0}))
        assert main(["rd-curve", "--instance", str(p)]) == 2
        assert "key_rate" in capsys.readouterr().err

    def test_infeasible(self, tmp_path):
        inst = write_instance(tmp_path / "i.json", limit=0.1, rate=0.1)
        assert main(["rd-curve", "--instance", inst]) == 3


class TestEquivocation:
    def test_all_three_no_key(self, tmp_path):
        inst = write_instance(tmp_path / "i.json")
        out = tmp_path / "eq.json"
        assert main(["equivocation", "--instance", inst, "--restarts", "8", "--out", str(out)]) == 0
        doc = json.loads(out.read_text())
        assert set(doc["results"]) == {"source", "reconstruction", "joint"}
        for res in doc["results"].values():
            assert res["value"] == pytest.approx(0.0, abs=1e-9)
        assert doc["metadata"]["seed"] == 0
        assert doc["metadata"]["search_options"]["restarts"] == 8

    def test_perfect_secrecy(self, tmp_path):
        inst = write_instance(tmp_path / "i.json", source=(0.3, 0.7), limit=0.1, key_rate=1.0)
        out = tmp_path / "eq.json"
        assert main(["equivocation", "--instance", inst, "--which", "source", "--out", str(out)]) == 0
        assert json.loads(out.read_text())["results"]["source"]["value"] == pytest.approx(h(0.3), abs=1e-9)

    def test_result_reparses(self, tmp_path):
        inst = write_instance(tmp_path / "i.json", limit=0.2, rate=0.6, key_rate=0.1)
        out = tmp_path / "eq.json"
        assert main(["equivocation", "--instance", inst, "--which", "joint", "--restarts", "4",
                     "--grid-step", "0.1", "--out", str(out)]) == 0
        doc = json.loads(out.read_text())["results"]["joint"]
        res = EquivocationResult.from_json(doc)
        assert res.to_json() == {k: v for k, v in doc.items() if k != "grid"}
        assert res.value >= doc["grid"]["value"] - 1e-3

    def test_byte_identical_reruns(self, tmp_path):
        inst = write_instance(tmp_path / "i.json", source=(0.4, 0.6), limit=0.2, rate=0.7, key_rate=0.2)
        outs = []
        for k in range(2):
            out = tmp_path / f"eq{k}.json"
            assert main(["equivocation", "--instance", inst, "--restarts", "6", "--seed", "3", "--out", str(out)]) == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_search_options_file(self, tmp_path):
        inst = write_instance(tmp_path / "i.json", limit=0.3, rate=0.5)
        opts = tmp_path / "opts.json"
        opts.write_text(json.dumps({"restarts": 3, "barrier_weight": 0.0}))
        out = tmp_path / "eq.json"
        assert main(["equivocation", "--instance", inst, "--which", "reconstruction", "--search-options",
                     str(opts), "--out", str(out)]) == 0
        meta = json.loads(out.read_text())["metadata"]["search_options"]
        assert meta["restarts"] == 3 and meta["barrier_weight"] == 0.0

    def test_unknown_which_is_parse_error(self, tmp_path):
        inst = write_instance(tmp_path / "i.json")
        with pytest.raises(SystemExit) as exc:
            main(["equivocation", "--instance", inst, "--which", "both"])
        assert exc.value.code == 2


class TestSweep:
    def test_key_rate_saturates(self, tmp_path):
        inst = write_instance(tmp_path / "i.json", limit=0.1, rate=1.0)
        out = tmp_path / "s.csv"
        assert main(["sweep", "--instance", inst, "--axis", "key_rate", "--values", "0:2:5",
                     "--outputs", "source", "--out", str(out)]) == 0
        rows = read_csv(out)
        assert rows[0] == ["axis_value", "source_eq"]
        assert len(rows) == 6
        assert float(rows[-1][1]) == pytest.approx(1.0, abs=1e-9)

    def test_distortion_sweep_nondecreasing(self, tmp_path, capsys):
        inst = write_instance(tmp_path / "i.json", source=(0.4, 0.6), limit=0.0, rate=1.0, key_rate=0.3)
        out = tmp_path / "s.csv"
        assert main(["sweep", "--instance", inst, "--axis", "distortion_limit", "--values", "0,0.1,0.2,0.3,0.4",
                     "--outputs", "source", "--out", str(out)]) == 0
        vals = [float(r[1]) for r in read_csv(out)[1:]]
        assert all(b >= a - 1e-9 for a, b in zip(vals, vals[1:]))
        assert "warning" not in capsys.readouterr().err

    def test_infeasible_point(self, tmp_path):
        inst = write_instance(tmp_path / "i.json", limit=0.3, rate=0.2)
        assert main(["sweep", "--instance", inst, "--axis", "distortion_limit", "--values", "0.3,0.05",
                     "--outputs", "source"]) == 3

    def test_bad_output_name(self, tmp_path):
        inst = write_instance(tmp_path / "i.json")
        assert main(["sweep", "--instance", inst, "--axis", "rate", "--values", "1", "--outputs", "key"]) == 2

    def test_values_parser(self):
        assert parse_values("0:1:3") == [0.0, 0.5, 1.0]
        assert parse_values("0.1, 0.2") == [0.1, 0.2]
        with pytest.raises(ValueError):
            parse_values("a,b")
        with pytest.raises(ValueError):
            parse_values("nan")


class TestOracleCheck:
    def test_one_time_pad_instance(self, tmp_path):
        inst = write_instance(tmp_path / "i.json", key_rate=1.0)
        out = tmp_path / "r.json"
        codes = tmp_path / "code.json"
        assert main(["oracle-check", "--instance", inst, "--n", "1", "--variant", "pi1", "--out", str(out),
                     "--dump-codes", str(codes)]) == 0
        rep = OracleReport.from_json(json.loads(out.read_text())["report"])
        assert rep.gap == pytest.approx(0.0, abs=1e-9)
        assert rep.mode == "past-source"
        assert BlockCode.from_json(json.loads(codes.read_text())).to_json() == rep.best_code.to_json()

    def test_no_key_forced_identity(self, tmp_path):
        inst = write_instance(tmp_path / "i.json", key_rate=0.0)
        out = tmp_path / "r.json"
        assert main(["oracle-check", "--instance", inst, "--out", str(out)]) == 0
        assert json.loads(out.read_text())["report"]["operational_value"] == 0.0

    def test_oversized(self, tmp_path, capsys):
        inst = write_instance(tmp_path / "i.json", rate=2 / 3, limit=0.5)
        assert main(["oracle-check", "--instance", inst, "--n", "3"]) == 5
        assert "codes" in capsys.readouterr().err

    def test_gap_alarm(self, tmp_path, monkeypatch):
        import equivoq.cli as cli_mod
        from equivoq import oracle

        real = oracle.operational_value

        def tampered(*args, **kw):
            rep = real(*args, **kw)
            return OracleReport(**{**rep.__dict__, "gap": -1e-3})

        monkeypatch.setattr(cli_mod, "operational_value", tampered)
        inst = write_instance(tmp_path / "i.json", key_rate=1.0)
        assert main(["oracle-check", "--instance", inst, "--out", str(tmp_path / "r.json")]) == 4

    def test_console_script_exit_code(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{")
        proc = subprocess.run([sys.executable, "-m", "equivoq.cli", "rd-curve", "--instance", str(bad)],
                              capture_output=True, text=True)
        assert proc.returncode == 2
