import csv
import json

import numpy as np
import pytest

from qpeuler import qpf
from qpeuler.cli import EXIT_FAIL, EXIT_INPUT, EXIT_OK, main

ROOT2 = 1.4142135623730951
GLUED = {"d": 2, "m": 1, "eps": 0.4712388980384690, "speeds": [[1.0], [ROOT2]], "sharpness": 8, "amplitude": 8}


def write(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


def run(tmp_path, command, cfg, out, *extra):
    return main([command, "--config", write(tmp_path / f"{out}.json", cfg), "--out", str(tmp_path / out), *extra])


@pytest.fixture(scope="module")
def bundle(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("bundle")
    cfg = {"gluing": GLUED, "embedding": {"matrix": [[1, 0], [0, 1]], "nu": [1.0, ROOT2]},
           "theta": [[0.3, 1.1]], "times": [0.37], "resolution": 256}
    assert run(tmp, "construct", cfg, "b") == EXIT_OK
    return tmp, tmp / "b"


QUICK = {"solver": {"T": 0.02, "dt": 1e-3}, "residual_tol": 1e-4,
         "frequency": {"T": 100, "dt": 0.05}, "orbit": {"T": [50, 100]}}


class TestConstruct:
    def test_bundle_contents(self, bundle):
        _, b = bundle
        names = {p.name for p in b.iterdir()}
        assert {"solution.json", "nonsymmetry.json", "manifest.json", "u_theta0_t0.qpf"} <= names
        field = qpf.read(b / "u_theta0_t0.qpf")
        assert field.components == 10 and field.metadata["offsets"] == [-2, -1, 0, 1, 2]
        assert json.loads((b / "nonsymmetry.json").read_text())[0]["verdict"] == "non-symmetric"

    def test_manifest_hashes(self, bundle):
        _, b = bundle
        man = json.loads((b / "manifest.json").read_text())
        assert man["command"] == "construct" and man["exit_code"] == 0
        assert set(man["files"]) == {p.name for p in b.iterdir() if p.name != "manifest.json"}

    def test_overlapping_tubes_rejected(self, tmp_path, capsys):
        cfg = {"gluing": {"d": 2, "m": 1, "eps": 1.0, "centers": [[0.0], [2.0]], "speeds": [[1.0], [2.0]]}}
        assert run(tmp_path, "construct", cfg, "x") == EXIT_INPUT
        assert "rho" in capsys.readouterr().err

    def test_schema_error(self, tmp_path):
        assert run(tmp_path, "construct", {"gluing": {"d": 2}}, "x") == EXIT_INPUT

    def test_missing_config(self, tmp_path):
        assert main(["construct", "--config", str(tmp_path / "none.json"), "--out", str(tmp_path / "o")]) == EXIT_INPUT

    def test_check_reproduces(self, bundle, tmp_path, capsys):
        tmp, b = bundle
        cfg = json.loads((b / "manifest.json").read_text())["config"]
        path = write(tmp_path / "again.json", cfg)
        assert main(["construct", "--config", path, "--out", str(b), "--check"]) == EXIT_OK
        assert json.loads(capsys.readouterr().out.strip().splitlines()[-1])["identical"] is True


class TestVerify:
    def test_passes(self, bundle):
        tmp, b = bundle
        assert run(tmp, "verify", {"bundle": str(b), **QUICK}, "v") == EXIT_OK
        report = json.loads((tmp / "v" / "report.json").read_text())
        assert report["pass"] and report["residual"][0]["max_momentum"] < 1e-4

    def test_corrupted_snapshot(self, bundle, tmp_path):
        import shutil
        _, b = bundle
        bad = tmp_path / "bad"
        shutil.copytree(b, bad)
        snap = bad / "u_theta0_t0.qpf"
        snap.write_bytes(snap.read_bytes()[:-64])
        assert run(tmp_path, "verify", {"bundle": str(bad), **QUICK}, "v") == EXIT_FAIL

    def test_missing_bundle(self, tmp_path):
        assert run(tmp_path, "verify", {"bundle": "nowhere"}, "v") == EXIT_INPUT

    def test_stationary_bundle(self, tmp_path):
        cfg = {"gluing": {"d": 2, "m": 1, "eps": 0.6, "J": 1, "speeds": [[0.0]], "sharpness": 8},
               "resolution": 128}
        assert run(tmp_path, "construct", cfg, "st") == EXIT_OK
        assert run(tmp_path, "analyze", {"bundle": "st", "frequency": {"T": 50, "dt": 0.05}}, "an") == EXIT_OK
        analysis = json.loads((tmp_path / "an" / "analysis.json").read_text())
        assert analysis["frequency"]["nonzero_peaks"] == 0


class TestAnalyze:
    def test_peaks_table(self, bundle):
        tmp, b = bundle
        assert run(tmp, "analyze", {"bundle": str(b), "frequency": {"T": 100, "dt": 0.05}}, "an") == EXIT_OK
        rows = list(csv.DictReader(open(tmp / "an" / "peaks.csv")))
        assert rows and all(r["matched"] == "True" for r in rows)
        assert max(abs(float(r["deviation"])) for r in rows) < 0.1

    def test_bundle_relative_to_config(self, bundle):
        tmp, _ = bundle
        assert run(tmp, "analyze", {"bundle": "b", "frequency": {"T": 20, "dt": 0.05}}, "an2") == EXIT_OK


class TestApproximate:
    def test_zero_datum(self, tmp_path):
        assert run(tmp_path, "approximate", {"psi0": "zero", "q": 1, "n": [2], "resolution": 64}, "ap") == EXIT_OK
        rows = list(csv.DictReader(open(tmp_path / "ap" / "convergence.csv")))
        assert [float(r["error"]) for r in rows] == [0.0]
        assert np.all(qpf.read(tmp_path / "ap" / "phi_n2.qpf").values == 0.0)

    def test_pairings(self, tmp_path):
        cfg = {"psi0": "sign_sin", "q": "inf", "n": [4], "g": [[0, 1]], "resolution": 32}
        assert run(tmp_path, "approximate", cfg, "ap") == EXIT_OK
        row = next(csv.DictReader(open(tmp_path / "ap" / "pairings.csv")))
        assert abs(float(row["difference"])) <= 1e-3
        assert not (tmp_path / "ap" / "convergence.csv").exists()

    def test_unknown_datum(self, tmp_path):
        assert run(tmp_path, "approximate", {"psi0": "nope", "q": 1, "n": [1]}, "ap") == EXIT_INPUT


class TestEvolve:
    def test_random(self, tmp_path):
        cfg = {"omega0": {"kind": "random", "seed": 3}, "resolution": 64, "T": 0.1, "dt": 1e-3,
               "snapshots": [0, 0.05, 0.1]}
        assert run(tmp_path, "evolve", cfg, "ev") == EXIT_OK
        rows = list(csv.DictReader(open(tmp_path / "ev" / "conservation.csv")))
        assert len(rows) == 3
        e = [float(r["energy"]) for r in rows]
        assert max(abs(v - e[0]) for v in e) / e[0] < 1e-8

    def test_bundle_without_path(self, tmp_path):
        assert run(tmp_path, "evolve", {"omega0": {"kind": "bundle"}, "T": 0.1, "dt": 1e-3}, "ev") == EXIT_INPUT
