import csv
import io
import json
from pathlib import Path

import pytest

from projlab.harness import cli, config, scenarios

FAST = {
    "appendix_probe": {"kind": "appendix_probe", "physical": {"beta": 1.0}},
    "decomposition_identity": {"kind": "decomposition_identity", "physical": {"beta": 1.0},
                               "numerical": {"n_trials": 1, "times": [0.5]}},
    "quantum_innerproduct": {"kind": "quantum_innerproduct", "physical": {"beta": 1.0},
                             "numerical": {"n_trials": 6, "dims": [2, 4]}},
    "tcl_split": {"kind": "tcl_split", "physical": {"beta": 1.0, "dim_env": 2},
                  "numerical": {"n_steps": 20, "t_max": 2.0}},
    "classical_drift": {"kind": "classical_drift", "physical": {"beta": 1.0},
                        "numerical": {"samples": 40_000, "bins": 24, "burn_in": 2_000}},
    "relevant_density": {"kind": "relevant_density", "physical": {"beta": 1.0, "displacement": 1.0},
                         "numerical": {"samples": 20_000, "bins": 16, "burn_in": 2_000,
                                       "dt": 1e-2, "times": [0.0, 0.5]}},
}


def _write(tmp_path, raw, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(raw))
    return str(path)


def _files(directory: Path) -> dict:
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir()) if p.name != "timing.json"}


class TestConfig:
    def test_defaults_filled(self):
        cfg = config.validate({"kind": "classical_drift", "physical": {"beta": 2}})
        assert cfg["physical"]["beta"] == 2.0 and cfg["numerical"]["samples"] == 1_000_000
        assert cfg["seed"] == 0 and cfg["schema_version"] == config.SCHEMA_VERSION

    @pytest.mark.parametrize("raw, message", [
        ({"kind": "classical_drift"}, "beta"),
        ({"kind": "nope", "physical": {"beta": 1}}, "kind"),
        ({"kind": "classical_drift", "physical": {"beta": 1, "spin": 1}}, "unknown"),
        ({"kind": "classical_drift", "physical": {"beta": -1}}, "positive"),
        ({"kind": "classical_drift", "physical": {"beta": 1, "system": "x"}}, "one of"),
        ({"kind": "classical_drift", "physical": {"beta": 1}, "numerical": {"samples": 1.5}}, "integer"),
        ({"kind": "classical_drift", "physical": {"beta": 1}, "seed": -3}, "seed"),
        ({"kind": "classical_drift", "physical": {"beta": 1}, "extra": 1}, "top-level"),
        ({"kind": "classical_drift", "physical": {"beta": 1}, "schema_version": 9}, "schema_version"),
        ({"kind": "appendix_probe", "physical": {"beta": 1, "p": [[0.5, 0.6]]}}, "rows"),
        ({"kind": "appendix_probe", "physical": {"beta": 1, "p": [[0.5, 0.6], [0.1, 0.1]]}}, "sum to 1"),
        ({"kind": "tcl_split", "physical": {"beta": 1, "dim_env": 40}}, "exceeds"),
        ({"kind": "tcl_split", "physical": {"beta": 1}, "numerical": {"specs": ["x"]}}, "specs"),
    ])
    def test_rejections(self, raw, message):
        with pytest.raises(config.ConfigError, match=message):
            config.validate(raw)

    def test_load_reports_bad_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(config.ConfigError, match="not valid JSON"):
            config.load(path)

    def test_parameter_path(self):
        cfg = config.validate(FAST["classical_drift"])
        assert config.parameter_path(cfg, "c") == ("physical", "c")
        assert config.parameter_path(cfg, "numerical.bins") == ("numerical", "bins")
        with pytest.raises(config.ConfigError):
            config.parameter_path(cfg, "omega")

    def test_builtins_validate_and_cover_every_kind(self):
        kinds = {scenarios.builtin(s)["kind"] for s in scenarios.list_ids()}
        assert kinds == set(config.SCHEMAS)


class TestRun:
    @pytest.mark.parametrize("kind", sorted(FAST))
    def test_byte_identical_reruns(self, kind, tmp_path):
        path = _write(tmp_path, {**FAST[kind], "id": kind, "seed": 3})
        for out in ("a", "b"):
            assert cli.main(["run", path, "--out", str(tmp_path / out)]) == 0
        a, b = _files(tmp_path / "a"), _files(tmp_path / "b")
        assert a == b and "report.json" in a and "MANIFEST.json" in a
        manifest = json.loads(a["MANIFEST.json"])["files"]
        assert set(manifest) == set(a) - {"MANIFEST.json"}
        assert json.loads(a["report.json"])["status"] == "ok"

    def test_seed_override_changes_output(self, tmp_path):
        path = _write(tmp_path, {**FAST["quantum_innerproduct"], "seed": 1})
        cli.main(["run", path, "--out", str(tmp_path / "a")])
        cli.main(["run", path, "--out", str(tmp_path / "b"), "--seed", "2"])
        ra = json.loads((tmp_path / "a" / "report.json").read_text())
        rb = json.loads((tmp_path / "b" / "report.json").read_text())
        assert rb["scenario"]["seed"] == 2 and ra["results"] != rb["results"]

    def test_drift_report_fields(self, tmp_path):
        path = _write(tmp_path, {**FAST["classical_drift"], "id": "small"})
        assert cli.main(["run", path, "--out", str(tmp_path / "o")]) == 0
        rep = json.loads((tmp_path / "o" / "report.json").read_text())
        assert 0 <= rep["results"]["drift"]["acceptance_fraction"] <= 1
        assert set(rep["warnings"]) == {"eigenvalue_floor", "empty_bins", "singular_times", "other"}
        rows = list(csv.reader(io.StringIO((tmp_path / "o" / "drift_residual.csv").read_text())))
        assert rows[0][:3] == ["q_S0", "p_S0", "count"] and len(rows) > 10

    def test_missing_beta_exits_2_without_outputs(self, tmp_path, capsys):
        path = _write(tmp_path, {"kind": "classical_drift"})
        out = tmp_path / "out"
        assert cli.main(["run", path, "--out", str(out)]) == 2
        assert not out.exists()
        assert "beta" in capsys.readouterr().err

    def test_numerical_failure_exits_3_with_marker(self, tmp_path):
        raw = {"kind": "classical_drift", "physical": {"beta": 1.0},
               "numerical": {"samples": 200, "burn_in": 200, "chains": 2}}
        out = tmp_path / "out"
        assert cli.main(["run", _write(tmp_path, raw), "--out", str(out)]) == 3
        assert (out / cli.FAILURE_MARKER).exists()
        assert json.loads((out / "report.json").read_text())["status"] == "numerical_error"

    def test_default_output_root(self, tmp_path, monkeypatch):
        monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path))
        path = _write(tmp_path, {**FAST["appendix_probe"], "id": "probe", "seed": 4})
        assert cli.main(["run", path]) == 0
        assert (tmp_path / "probe-seed4" / "report.json").exists()

    def test_builtin_id_accepted(self, tmp_path):
        assert cli.main(["run", "appendix-probe-default", "--out", str(tmp_path)]) == 0

    def test_unknown_config(self, capsys):
        assert cli.main(["run", "no-such-thing"]) == 2


class TestListAndDescribe:
    def test_list(self, capsys):
        assert cli.main(["list-scenarios"]) == 0
        out = capsys.readouterr().out
        for kind in config.SCHEMAS:
            assert kind in out

    def test_describe_probe(self, capsys):
        assert cli.main(["describe", "appendix-probe-default"]) == 0
        out = capsys.readouterr().out
        assert "classical-classical" in out and "q1" in out and "Q2" in out

    def test_describe_unknown(self, capsys):
        assert cli.main(["describe", "nope"]) == 2
        assert "unknown" in capsys.readouterr().err


class TestSweep:
    def _sweep(self, tmp_path, raw, param, values):
        out = tmp_path / "sweep"
        code = cli.main(["sweep", _write(tmp_path, raw), "--param", param, "--values", values,
                         "--out", str(out)])
        text = (out / "sweep.csv").read_text() if (out / "sweep.csv").exists() else ""
        return code, list(csv.DictReader(io.StringIO(text)))

    def test_coupling_sweep_tracks_oracle(self, tmp_path):
        raw = {"kind": "classical_drift", "physical": {"beta": 1.0},
               "numerical": {"samples": 200_000}}
        code, rows = self._sweep(tmp_path, raw, "c", "0,0.25,0.5")
        assert code == 0 and len(rows) == 3
        for r in rows:
            c = float(r["c"])
            assert float(r["k_eff_oracle"]) == pytest.approx(1 - c ** 2)
            assert float(r["k_eff_fit"]) == pytest.approx(1 - c ** 2, rel=0.03)

    def test_mixing_sweep_on_probe(self, tmp_path):
        raw = {"kind": "appendix_probe", "physical": {"beta": 1.0, "p": [[0.5, 0.1], [0.1, 0.3]]}}
        code, rows = self._sweep(tmp_path, raw, "eps", "0,0.5,1")
        assert code == 0
        res = [float(r["residual"]) for r in rows]
        assert res[0] < 1e-12 and res[0] <= res[1] <= res[2]

    def test_empty_values(self, tmp_path):
        code, _ = self._sweep(tmp_path, FAST["appendix_probe"], "eps", " , ")
        assert code == 2

    def test_unknown_parameter(self, tmp_path):
        code, _ = self._sweep(tmp_path, FAST["appendix_probe"], "omega", "1")
        assert code == 2
