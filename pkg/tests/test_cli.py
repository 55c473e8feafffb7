import csv
import hashlib
import json
import subprocess
import sys

import pytest

from ringlab.cli import main
from ringlab.profile import find_admissible

SMALL = """\
family: NLS
d: 1
sigma: 3
ic: gaussian_1d(2, 2)
n_points: 400
dt0: 5.0e-5
focus_target: 1.0e3
s0: null
"""


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def data_files(d):
    return sorted(p.relative_to(d) for p in d.rglob("*.csv") if p.name != "sweep.csv")


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "small.yaml"
    cfg.write_text(SMALL)
    out = root / "run"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    return cfg, out


class TestRun:
    def test_outputs(self, small_run):
        _, out = small_run
        assert (out / "series.csv").exists()
        assert sorted(p.name for p in out.glob("snapshot_*.csv")) == ["snapshot_1e1.csv", "snapshot_1e2.csv", "snapshot_1e3.csv"]

    def test_manifest_inventory(self, small_run):
        _, out = small_run
        man = json.loads((out / "manifest.json").read_text())
        assert man["termination"] == "focus_target_reached"
        assert man["config"]["n_points"] == 400
        for name, meta in man["files"].items():
            assert sha(out / name) == meta["sha256"]
            assert (out / name).stat().st_size == meta["bytes"]

    def test_rerun_is_byte_identical(self, small_run, tmp_path):
        cfg, out = small_run
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "again")]) == 0
        for name in data_files(out):
            assert (out / name).read_bytes() == (tmp_path / "again" / name).read_bytes()

    def test_max_steps_exit_code(self, tmp_path):
        cfg = tmp_path / "c.yaml"
        cfg.write_text(SMALL + "max_steps: 5\n")
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 5

    def test_config_error_exit_code(self, tmp_path, capsys):
        cfg = tmp_path / "c.yaml"
        cfg.write_text(SMALL.replace("sigma: 3", "sigma: -1"))
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
        assert "sigma" in capsys.readouterr().err

    def test_relative_out_goes_under_output_root(self, tmp_path, monkeypatch):
        monkeypatch.setenv("RINGLAB_OUTPUT_ROOT", str(tmp_path / "root"))
        cfg = tmp_path / "c.yaml"
        cfg.write_text(SMALL + "max_steps: 3\n")
        main(["run", "--config", str(cfg)])
        assert (tmp_path / "root" / "c" / "series.csv").exists()


class TestAnalyze:
    def test_writes_json_and_figures(self, small_run, tmp_path, capsys):
        _, out = small_run
        assert main(["analyze", "--series", str(out / "series.csv"), "--out", str(tmp_path / "a")]) == 0
        printed = json.loads(capsys.readouterr().out)
        res = json.loads((tmp_path / "a" / "analysis.json").read_text())
        # 1/L = 1e3 on 400 nodes is still pre-asymptotic
        assert res["p"] == pytest.approx(0.5, abs=0.05)
        assert printed["tc"] == res["tc"]
        for fig in ("ring_radius.png", "rate_fit.png", "rate_limit.png", "profiles.png"):
            assert (tmp_path / "a" / fig).stat().st_size > 0
        assert res["rescaled_profiles"] == ["rescaled_1e1.csv", "rescaled_1e2.csv", "rescaled_1e3.csv"]

    def test_missing_series(self, tmp_path):
        assert main(["analyze", "--series", str(tmp_path / "none.csv")]) == 1


class TestClassify:
    def test_json(self, capsys):
        assert main(["classify", "--sigma", "3", "--d", "2"]) == 0
        res = json.loads(capsys.readouterr().out)
        assert res["alpha"] == pytest.approx(-1 / 3) and res["regime"] == "standing"

    def test_bad_domain(self):
        assert main(["classify", "--sigma", "3", "--d", "1"]) == 1

    def test_module_entry_point(self):
        proc = subprocess.run([sys.executable, "-m", "ringlab.cli", "classify", "--sigma", "2", "--d", "2"], capture_output=True, text=True)
        assert proc.returncode == 0 and json.loads(proc.stdout)["alpha"] == 0.0


class TestProfileCommand:
    def test_writes_profile(self, tmp_path, capsys):
        assert main(["profile", "--sigma", "3", "--out", str(tmp_path / "p")]) == 0
        rec = json.loads((tmp_path / "p" / "profile.json").read_text())
        assert rec["kappa"] == pytest.approx(1.664, abs=0.005)
        assert (tmp_path / "p" / "profile.csv").read_text().startswith("r,re,im")


def read_sweep(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestSweep:
    def test_single_point_equals_run(self, small_run, tmp_path):
        cfg, out = small_run
        spec = tmp_path / "s.yaml"
        spec.write_text(f"base: {cfg}\naxes:\n  sigma: [3]\n")
        assert main(["sweep", "--spec", str(spec), "--out", str(tmp_path / "sw")]) == 0
        rows = read_sweep(tmp_path / "sw" / "sweep.csv")
        assert len(rows) == 1 and rows[0]["status"] == "focus_target_reached"
        cell = tmp_path / "sw" / rows[0]["cell"]
        for name in data_files(out):
            assert (cell / name).read_bytes() == (out / name).read_bytes()

    def test_parallelism_does_not_change_results(self, small_run, tmp_path):
        cfg, _ = small_run
        spec = tmp_path / "s.yaml"
        spec.write_text(f"base: {cfg}\naxes:\n  ic.amplitude: [1.9, 2.0]\n  sigma: [2.5, 3]\n")
        assert main(["sweep", "--spec", str(spec), "--threads", "1", "--out", str(tmp_path / "t1")]) == 0
        assert main(["sweep", "--spec", str(spec), "--threads", "4", "--out", str(tmp_path / "t4")]) == 0
        files = data_files(tmp_path / "t1")
        assert len(files) >= 4 * 3 and files == data_files(tmp_path / "t4")
        for name in files:
            assert (tmp_path / "t1" / name).read_bytes() == (tmp_path / "t4" / name).read_bytes()
        assert (tmp_path / "t1" / "sweep.csv").read_bytes() == (tmp_path / "t4" / "sweep.csv").read_bytes()

    @pytest.mark.slow
    def test_profile_sweep_trends(self, tmp_path):
        spec = tmp_path / "s.yaml"
        spec.write_text("kind: profile\naxes:\n  sigma: [2.5, 3, 3.5]\n")
        assert main(["sweep", "--spec", str(spec), "--out", str(tmp_path / "p")]) == 0
        rows = read_sweep(tmp_path / "p" / "sweep.csv")
        kappa = [float(r["kappa"]) for r in rows]
        s0 = [float(r["s0"]) for r in rows]
        assert kappa[0] < kappa[1] < kappa[2]
        assert s0[0] > s0[1] > s0[2]
        for r, k, s in zip(rows, kappa, s0):
            direct = find_admissible(float(r["sigma"]))
            assert k == pytest.approx(direct.kappa, rel=1e-12) and s == pytest.approx(direct.s0, rel=1e-12)
