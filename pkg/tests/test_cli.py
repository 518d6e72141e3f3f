import json
import math

import pytest
from loguru import logger

from config.settings import settings
from main import parse_config, run
from utils.errors import UsageError


@pytest.fixture(autouse=True)
def quiet_logger():
    yield
    logger.remove()


def error_line(stderr: str) -> dict:
    lines = [line for line in stderr.splitlines() if line.startswith('{"error"')]
    assert lines, stderr
    return json.loads(lines[-1])["error"]


class TestSweepout:

    def test_exact_csv(self, capsys):
        assert run(["sweepout", "--measure", "uniform:2", "--pattern", "11",
                    "--K", "3", "--exact"]) == 0
        assert capsys.readouterr().out == (
            "k,s_tilde,hitting_tail,return_tail,c_k\n"
            "0,1,1,1,0\n"
            "1,3/4,3/4,1/2,1/4\n"
            "2,5/8,5/8,1/2,1/8\n"
            "3,1/2,1/2,,\n"
        )

    def test_float_json(self, capsys):
        assert run(["sweepout", "--pattern", "0", "--K", "4", "--format", "json"]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["command"] == "sweepout"
        assert report["result"]["mode"] == "float"
        assert report["result"]["mu_A"] == "1/2"
        assert [row["s_tilde"] for row in report["result"]["rows"]] == pytest.approx(
            [1.0, 0.5, 0.25, 0.125, 0.0625], rel=1e-12)

    def test_reruns_are_identical(self, capsys):
        argv = ["sweepout", "--measure", "markov:0.9,0.1;0.1,0.9", "--pattern", "010", "--K", "50"]
        assert run(argv) == 0
        first = capsys.readouterr().out
        assert run(argv) == 0
        assert capsys.readouterr().out == first

    def test_exact_beyond_k_exact(self, capsys):
        assert run(["sweepout", "--pattern", "11", "--K", "20", "--exact", "--k-exact", "10"]) == 1
        assert error_line(capsys.readouterr().err)["code"] == "usage"

    def test_float_file_gets_rational_table(self, tmp_path, capsys):
        out = tmp_path / "series.csv"
        assert run(["sweepout", "--pattern", "11", "--K", "3", "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "k,s_tilde,hitting_tail,return_tail,c_k"
        assert len(lines) == 5
        assert (tmp_path / "series.exact.csv").read_text() == (
            "k,s_tilde,hitting_tail,return_tail,c_k\n"
            "0,1,1,1,0\n"
            "1,3/4,3/4,1/2,1/4\n"
            "2,5/8,5/8,1/2,1/8\n"
            "3,1/2,1/2,,\n"
        )

    def test_float_stdout_holds_one_table(self, tmp_path, capsys, monkeypatch):
        monkeypatch.chdir(tmp_path)
        assert run(["sweepout", "--pattern", "11", "--K", "3"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "k,s_tilde,hitting_tail,return_tail,c_k"
        assert len(lines) == 5
        assert not list(tmp_path.glob("*.exact.csv"))


class TestReports:

    def test_escape(self, capsys):
        assert run(["escape", "--pattern", "11", "--K", "512"]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["config"]["pattern"] == "11"
        assert report["result"]["rho_closed"] == pytest.approx(
            math.log(2) - math.log((1 + math.sqrt(5)) / 2), abs=1e-12)
        assert report["result"]["ratio_closed_limit"] == "2/3"

    def test_escape_family_csv(self, capsys):
        assert run(["escape", "--format", "csv", "--family", "fibonacci",
                    "--lmin", "4", "--lmax", "6", "--K", "512"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "l,mu,rho,ratio,sup_dev_exp,sup_dev_mu"
        assert len(lines) == 4
        assert [line.split(",")[0] for line in lines[1:]] == ["4", "5", "6"]

    def test_escape_pattern_csv(self, capsys):
        assert run(["escape", "--format", "csv", "--pattern", "11", "--K", "512"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "l,mu,rho,ratio,sup_dev_exp,sup_dev_mu"
        assert lines[1].startswith("2,0.25,")

    def test_classify(self, capsys):
        assert run(["classify", "--pattern", "0000000001", "--epsilon", "0.1"]) == 0
        result = json.loads(capsys.readouterr().out)["result"]
        assert result["member"] is True
        assert result["w_A"] == 10
        assert result["epsilon"] == "1/10"

    def test_laplace_rows(self, capsys):
        assert run(["laplace", "--pattern", "0", "--t", "1", "2", "--format", "csv"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0].startswith("pattern,l,mu,t,")
        assert len(lines) == 3

    def test_ledger(self, capsys):
        assert run(["ledger"]) == 0
        result = json.loads(capsys.readouterr().out)["result"]
        assert len(result) == 8
        keys = {entry["key"] for entry in result}
        assert {"sweepout_index", "periodic_limit_sign", "escape_example"} <= keys

    def test_mc_with_raw_samples(self, capsys, tmp_path):
        raw = tmp_path / "taus.csv"
        assert run(["mc", "--pattern", "0", "--N", "500", "--seed", "3",
                    "--raw-samples", str(raw)]) == 0
        result = json.loads(capsys.readouterr().out)["result"]
        assert result["stats"]["N"] == 500
        assert "samples" not in result["stats"]
        lines = raw.read_text().splitlines()
        assert lines[0] == "tau"
        assert len(lines) == 501

    def test_tauf_exact(self, capsys):
        assert run(["tauf", "--observable", "00:1,01:1/2", "--K", "2", "--exact",
                    "--format", "csv"]) == 0
        assert capsys.readouterr().out == "k,s_f\n0,1\n1,3/4\n2,5/8\n"


class TestErrors:

    @pytest.mark.parametrize("argv", [
        ["sweepout", "--pattern", "11", "--K", "-1"],
        ["sweepout", "--pattern", "01a"],
        ["sweepout"],
        ["escape", "--pattern", "11", "--measure", "bernoulli:0.3,0.6"],
        ["classify", "--pattern", "01"],
        ["frobnicate"],
        ["tauf", "--observable", "00:1", "--exact", "--N", "10"],
    ])
    def test_usage_errors(self, capsys, argv):
        assert run(argv) == 1
        error = error_line(capsys.readouterr().err)
        assert error["code"] in ("usage", "invalid_measure")
        assert error["message"]

    def test_series_too_short(self, capsys):
        assert run(["escape", "--pattern", "01", "--K", "10"]) == 2
        error = error_line(capsys.readouterr().err)
        assert error["code"] == "series_too_short"
        assert error["required_k"] == 64

    def test_state_budget(self, capsys, monkeypatch):
        monkeypatch.setattr(settings, "state_budget", 2)
        assert run(["tauf", "--observable", "0110:1", "--K", "5", "--exact"]) == 2
        error = error_line(capsys.readouterr().err)
        assert error["code"] == "state_budget"
        assert error["budget"] == 2

    def test_not_a_member(self, capsys):
        assert run(["bounds", "--pattern", "0100101001", "--epsilon", "0.1", "--K", "128"]) == 1
        assert error_line(capsys.readouterr().err)["code"] == "not_a_member"

    def test_help(self, capsys):
        assert run(["--help"]) == 0
        assert "sweepout" in capsys.readouterr().out


class TestConfig:

    def test_flags_win_over_file(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"command": "sweepout", "pattern": "11", "K": 3, "exact": True}))
        config = parse_config(["--config", str(path), "sweepout", "--K", "2"])
        assert config.K == 2
        assert config.pattern == "11"
        assert config.exact

    def test_unknown_key(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"pattern": "11", "colour": "red"}))
        with pytest.raises(UsageError):
            parse_config(["--config", str(path), "sweepout"])

    def test_exact_only_where_supported(self, tmp_path, capsys):
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"exact": True}))
        assert run(["--config", str(path), "escape", "--pattern", "11"]) == 1
        assert "--exact" in error_line(capsys.readouterr().err)["message"]

    def test_csv_sidecar(self, tmp_path, capsys):
        out = tmp_path / "series.csv"
        assert run(["sweepout", "--pattern", "11", "--K", "3", "--exact", "--out", str(out)]) == 0
        assert capsys.readouterr().out == ""
        assert out.read_text().splitlines()[1] == "0,1,1,1,0"
        sidecar = json.loads((tmp_path / "series.csv.config.json").read_text())
        assert sidecar["command"] == "sweepout"
        assert sidecar["K"] == 3
        assert sidecar["exact"] is True
