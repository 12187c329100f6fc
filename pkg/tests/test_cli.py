import json
import os

import pytest

from tvcn import cli, graph, harness
from tvcn.errors import ConfigError


def write_config(tmp_path, data):
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(data))
    return str(path)


MINIMAL = {"n0": 5, "M": 5, "beta": 0.6, "gamma": 0.8, "sizes": [60], "users": 2, "seed": 4}


class TestParseConfig:
    def test_minimal_with_defaults(self, tmp_path):
        sc = cli.parse_config(write_config(tmp_path, MINIMAL))
        assert sc.gain == 0.1
        assert sc.max_iter == 15000
        assert sc.tol == 1e-6
        assert sc.sizes == (60,)

    def test_beta_out_of_range_names_constraint(self, tmp_path):
        cfg = dict(MINIMAL, beta=1.2)
        with pytest.raises(ConfigError) as err:
            cli.parse_config(write_config(tmp_path, cfg))
        assert "beta" in str(err.value)
        assert "(0, 1)" in str(err.value)

    def test_unknown_key_rejected(self, tmp_path):
        with pytest.raises(ConfigError) as err:
            cli.parse_config(write_config(tmp_path, dict(MINIMAL, burst=3)))
        assert "burst" in str(err.value)

    def test_missing_seed_autogenerated(self, tmp_path):
        cfg = dict(MINIMAL)
        del cfg["seed"]
        sc1 = cli.parse_config(write_config(tmp_path, cfg))
        assert isinstance(sc1.seed, int)

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError):
            cli.parse_config(str(path))


class TestEmitOutputs:
    def _report(self, **kw):
        cfg = dict(MINIMAL)
        cfg.update(kw)
        return harness.run_scenario(cli.parse_config(cfg))

    def test_file_set_and_manifest(self, tmp_path):
        rep = self._report()
        out = str(tmp_path / "run")
        manifest = cli.emit_outputs(rep, out)
        names = set(manifest["files"])
        assert {"report.json", "table1.csv", "table3.csv", "table4.csv"} <= names
        assert any(n.startswith("trajectories/") for n in names)
        assert any(n.startswith("snapshots/") for n in names)
        assert os.path.exists(os.path.join(out, "manifest.json"))
        assert "content_sha256" in manifest

    def test_table1_shape(self, tmp_path):
        rep = self._report(users=4, schemes=["proposed", "mo", "la"])
        out = str(tmp_path / "run")
        cli.emit_outputs(rep, out)
        lines = open(os.path.join(out, "table1.csv")).read().strip().splitlines()
        assert lines[0] == "user,w0,wstar_proposed,wstar_mo,wstar_la"
        assert len(lines) == 1 + 4

    def test_empty_report_manifest(self, tmp_path):
        scenario = cli.parse_config(MINIMAL)
        report = harness.ComparisonReport(
            scenario=scenario, backend="python", users=[], cells=[],
            alpha_hat={}, fairness={}, calibration={},
        )
        manifest = cli.emit_outputs(report, str(tmp_path / "empty"))
        assert set(manifest["files"]) == {"report.json", "manifest.json"}

    def test_rerun_same_seed_same_content_checksum(self, tmp_path):
        m1 = cli.emit_outputs(self._report(), str(tmp_path / "a"))
        m2 = cli.emit_outputs(self._report(), str(tmp_path / "b"))
        assert m1["content_sha256"] == m2["content_sha256"]
        for name in m1["files"]:
            if name not in ("report.json", "table4.csv", "manifest.json"):
                assert m1["files"][name]["sha256"] == m2["files"][name]["sha256"], name


class TestMain:
    def test_generate(self, tmp_path):
        cfg = write_config(tmp_path, MINIMAL)
        out = str(tmp_path / "gen")
        assert cli.main(["generate", "--config", cfg, "--out", out]) == 0
        snap = graph.NetworkSnapshot.from_json(open(os.path.join(out, "N60.json")).read())
        assert snap.n_nodes == 60

    def test_compare_exit_codes(self, tmp_path):
        cfg = write_config(tmp_path, MINIMAL)
        out = str(tmp_path / "cmp")
        assert cli.main(["compare", "--config", cfg, "--out", out]) == 0

    def test_simulate_single_scheme(self, tmp_path):
        cfg = write_config(tmp_path, MINIMAL)
        out = str(tmp_path / "sim")
        assert cli.main(["simulate", "--config", cfg, "--out", out, "--scheme", "mo"]) == 0
        report = json.loads(open(os.path.join(out, "report.json")).read())
        assert {c["scheme"] for c in report["cells"]} == {"mo"}

    def test_config_error_exit_code(self, tmp_path):
        cfg = write_config(tmp_path, dict(MINIMAL, beta=2.0))
        assert cli.main(["compare", "--config", cfg, "--out", str(tmp_path / "x")]) == 1

    def test_nonconvergence_exit_code(self, tmp_path):
        cfg = write_config(tmp_path, dict(MINIMAL, max_iter=5, tol=1e-13))
        assert cli.main(["compare", "--config", cfg, "--out", str(tmp_path / "nc")]) == 2

    def test_fitdist(self, tmp_path, capsys):
        cfg = write_config(tmp_path, dict(MINIMAL, sizes=[400]))
        out = str(tmp_path / "gen2")
        cli.main(["generate", "--config", cfg, "--out", out])
        code = cli.main(["fitdist", "--snapshot", os.path.join(out, "N400.json"), "--k-min", "3"])
        assert code == 0
        assert "alpha_hat=" in capsys.readouterr().out

    def test_stability_subcommand(self, tmp_path):
        snap = graph.new_seed_network(6, "complete", __import__("numpy").random.default_rng(0))
        state = {
            "snapshot": snap.to_json_dict(),
            "users": [{"source": 0, "dest": 3, "a": 1.0, "b": 0.5}],
            "windows": [2.0],
        }
        spath = tmp_path / "state.json"
        spath.write_text(json.dumps(state))
        out = str(tmp_path / "stab")
        code = cli.main(["stability", "--state", str(spath), "--out", out, "--dump-matrices"])
        assert code == 0
        rep = json.loads(open(os.path.join(out, "stability.json")).read())
        assert "Q" in rep and "eigenvalues" in rep
