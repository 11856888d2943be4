import json
import subprocess
import sys

import pytest

from pamlab import cli, experiments
from pamlab.errors import SolverFailure


def run_cli(*args, cwd=None):
    return subprocess.run([sys.executable, "-m", "pamlab.cli", *args], capture_output=True, text=True, cwd=cwd)


class TestConfig:
    def test_defaults(self):
        cfg = experiments.validate_config({"experiment": "spectrum"})
        assert cfg.Ns == [9, 27, 81] and cfg.k == 3

    def test_collects_all_errors(self):
        with pytest.raises(experiments.ConfigError) as exc:
            experiments.validate_config({"experiment": "spectrum", "Ns": [4, 9], "alpha": 2.0, "bogus": 1})
        assert set(exc.value.errors) == {"Ns", "alpha", "bogus"}

    def test_bad_walk_names_failures(self):
        walk = {"atoms": [[1, 0, 2.0], [-1, 0, 2.0]]}
        with pytest.raises(experiments.ConfigError) as exc:
            experiments.validate_config({"experiment": "spectrum", "walk": walk})
        assert "radial" in exc.value.errors["walk"]

    def test_unknown_experiment(self):
        with pytest.raises(experiments.ConfigError) as exc:
            experiments.validate_config({"experiment": "nope"})
        assert "experiment" in exc.value.errors

    def test_times_within_horizon(self):
        with pytest.raises(experiments.ConfigError) as exc:
            experiments.validate_config({"experiment": "polymer", "T": 0.5, "times": [0.7]})
        assert "times" in exc.value.errors

    def test_digest_ignores_out(self):
        a = experiments.validate_config({"experiment": "spectrum", "out": "a"})
        b = experiments.validate_config({"experiment": "spectrum", "out": "b"})
        c = experiments.validate_config({"experiment": "spectrum", "seed": 1})
        assert a.digest() == b.digest() != c.digest()

    def test_toml_and_json(self, tmp_path):
        (tmp_path / "c.toml").write_text('Ns = [5, 7, 9]\nseed = 4\n')
        (tmp_path / "c.json").write_text('{"Ns": [5, 7, 9], "seed": 4}')
        assert experiments.load_config(tmp_path / "c.toml") == experiments.load_config(tmp_path / "c.json")

    def test_parse_walk(self):
        assert experiments.parse_walk({"range_two": [0.6, 0.1]}).atoms[(2, 0)] == pytest.approx(0.1)
        with pytest.raises(Exception):
            experiments.parse_walk("levy")


class TestCommandLine:
    def test_spectrum_deterministic(self, tmp_path):
        outs = []
        for name in ("a", "b"):
            r = run_cli("spectrum", "--N", "9,27", "--k", "3", "--samples", "5", "--seed", "7",
                        "--out", str(tmp_path / name))
            assert r.returncode == 0, r.stderr
            outs.append((tmp_path / name / "spectrum.csv").read_bytes())
        assert outs[0] == outs[1]
        header = outs[0].decode().splitlines()[0]
        assert header == "N,seed,j,lambda_raw,lambda_shifted"
        manifest = json.loads((tmp_path / "a" / "MANIFEST.json").read_text())
        assert manifest["files"]["spectrum.csv"] == {"module": "spectrum", "operation": "lowest_eigenvalues"}
        assert manifest["master_seed"] == 7

    def test_config_error_exit_2(self, tmp_path):
        r = run_cli("spectrum", "--walk", '{"atoms": [[1, 0, 1.0]]}', "--out", str(tmp_path))
        assert r.returncode == 2
        assert "config error: walk:" in r.stderr and "radial" in r.stderr

    def test_unreadable_config_exit_2(self, tmp_path):
        r = run_cli("spectrum", "--config", str(tmp_path / "missing.toml"))
        assert r.returncode == 2

    def test_flags_override_config(self, tmp_path):
        (tmp_path / "c.toml").write_text('Ns = [3, 5]\nsamples = 2\nk = 2\nseed = 1\n')
        r = run_cli("spectrum", "--config", str(tmp_path / "c.toml"), "--seed", "2", "--out", str(tmp_path / "o"))
        assert r.returncode == 0, r.stderr
        assert json.loads((tmp_path / "o" / "MANIFEST.json").read_text())["config"]["seed"] == 2

    def test_runtime_failure_exit_1(self, tmp_path, monkeypatch, capsys):
        def boom(cfg):
            raise SolverFailure("eigensolver did not converge", None)

        monkeypatch.setitem(experiments.DRIVERS, "spectrum", ("spectrum", "lowest_eigenvalues", boom))
        rc = cli.main(["spectrum", "--N", "5", "--samples", "1", "--out", str(tmp_path)])
        assert rc == 1
        assert "runtime failure in stage spectrum" in capsys.readouterr().err

    @pytest.mark.parametrize("exp,extra,files", [
        ("noise-diagnostics", ["--K", "3"], ["noise_summary.json", "noise_samples.csv", "plot.csv"]),
        ("pam-convergence", ["--T", "0.1"], ["pam_summary.json", "pam_observables.csv"]),
        ("operator-norm", ["--trials", "2"], ["operator_norm_summary.json"]),
        ("chaos-moments", ["--p", "4"], ["chaos_reports.json", "chaos_reports.csv"]),
        ("polymer", ["--n-paths", "200", "--T", "0.2", "--times", "0.1,0.2"], ["polymer_tv.csv"]),
    ])
    def test_every_experiment_runs(self, tmp_path, exp, extra, files):
        rc = cli.main([exp, "--N", "5,9", "--samples", "3", "--seed", "1", "--out", str(tmp_path), *extra])
        assert rc == 0
        for f in files + ["MANIFEST.json"]:
            assert (tmp_path / f).exists()

    def test_help(self):
        r = run_cli("--help")
        assert r.returncode == 0 and "spectrum" in r.stdout
