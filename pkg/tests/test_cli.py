import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from sepkit.cli import main
from sepkit.metrics import metric_sisdr
from sepkit.wavio import read_wav


@pytest.fixture
def scenario(tmp_path):
    p = tmp_path / "scenario.json"
    p.write_text(json.dumps({"num_sources": 2, "seed": 4, "length": 4000,
                             "source_kind": "filtered_noise", "num_channels": 2}))
    return p


def _simulate(tmp_path, scenario, name="sim", n=1, extra=()):
    out = tmp_path / name
    assert main(["simulate", str(scenario), str(out), "-n", str(n), *extra]) == 0
    return out


def test_simulate_is_deterministic(tmp_path, scenario):
    a = _simulate(tmp_path, scenario, "a", n=2)
    b = _simulate(tmp_path, scenario, "b", n=2, extra=("--jobs", "2"))
    for name in ("mixture.wav", "source_1.wav", "source_2.wav", "noise.wav"):
        assert (a / "ex_00001" / name).read_bytes() == (b / "ex_00001" / name).read_bytes()
    manifest = json.loads((a / "manifest.json").read_text())
    assert manifest["command"] == "simulate" and manifest["seeds"]["seed"] == 4


def test_bad_json_reports_location(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{"seed": 1,,}')
    assert main(["simulate", str(p), str(tmp_path / "o")]) == 2
    assert "line 1, column" in capsys.readouterr().err


def test_identity_masks_return_mixture(tmp_path, scenario):
    sim = _simulate(tmp_path, scenario)
    out = tmp_path / "sep"
    assert main(["separate", str(sim / "ex_00000" / "mixture.wav"), str(out),
                 "--masks", "identity", "--transform", "stft-ri", "--frame", "4/2"]) == 0
    mix = read_wav(sim / "ex_00000" / "mixture.wav").reference().samples
    est = read_wav(out / "est_1.wav").samples
    assert np.max(np.abs(est[32:-32] - mix[32:-32])) < 1e-6  # float32 WAV quantization
    rows = list(csv.reader(open(out / "latent_energy.csv")))
    assert rows[0] == ["signal", "frame", "feature", "energy_db"]


def test_oracle_pipeline_improves(tmp_path, scenario):
    sim = _simulate(tmp_path, scenario)
    ex = sim / "ex_00000"
    sep, bf = tmp_path / "sep", tmp_path / "bf"
    assert main(["separate", str(ex / "mixture.wav"), str(sep), "--masks", "oracle-irm",
                 "--references", str(ex)]) == 0
    mix = read_wav(ex / "mixture.wav").reference().samples
    ref = read_wav(ex / "source_1.wav").reference().samples
    est = read_wav(sep / "est_1.wav").samples
    assert metric_sisdr(est, ref) - metric_sisdr(mix, ref) > 5
    assert main(["beamform", str(ex / "mixture.wav"), str(sep), str(bf), "--filter-len", "15"]) == 0
    report = tmp_path / "report.json"
    assert main(["evaluate", str(bf), str(ex), "--out", str(report),
                 "--mixture", str(ex / "mixture.wav")]) == 0
    rep = json.loads(report.read_text())
    assert rep["aggregate"]["mean_si_sdr_improvement_db"] > 5
    per = [r["mean_si_sdr_db"] for r in rep["examples"].values()]
    assert abs(rep["aggregate"]["mean_si_sdr_db"] - np.mean(per)) < 1e-12


def test_evaluate_references_against_themselves(tmp_path, scenario):
    sim = _simulate(tmp_path, scenario)
    report = tmp_path / "r.json"
    assert main(["evaluate", str(sim / "ex_00000"), str(sim / "ex_00000"), "--out", str(report)]) == 0
    rep = json.loads(report.read_text())
    assert rep["aggregate"]["mean_si_sdr_db"] == 60.0


def test_missing_estimates_dir(tmp_path, scenario):
    sim = _simulate(tmp_path, scenario)
    rc = main(["beamform", str(sim / "ex_00000" / "mixture.wav"), str(tmp_path / "nope"),
               str(tmp_path / "bf")])
    assert rc == 2


def test_losscheck_exit_codes(tmp_path):
    assert main(["losscheck", "--pairs", "50", "--grad-instances", "5",
                 "--out", str(tmp_path / "lc.json")]) == 0
    report = json.loads((tmp_path / "lc.json").read_text())
    assert max(report["max_relative_gradient_error"].values()) < 1e-5
    assert main(["losscheck", "--pairs", "5", "--grad-instances", "3",
                 "--inject-broken-gradient", "mse"]) == 1


def test_toytrain_rejects_zero_steps_and_reruns(tmp_path):
    cfg = tmp_path / "toy.json"
    cfg.write_text(json.dumps({"steps": 0}))
    assert main(["toytrain", str(cfg), "--out-dir", str(tmp_path / "t0")]) == 2
    cfg.write_text(json.dumps({"steps": 40, "feature_dim": 40,
                               "batch": {"count": 2, "length": 800}}))
    out = tmp_path / "t1"
    assert main(["toytrain", str(cfg), "--out-dir", str(out)]) == 0
    first = (out / "trace.csv").read_bytes()
    kernels = (out / "kernels.sepk").read_bytes()
    assert main(["rerun", str(out / "manifest.json")]) == 0
    assert (out / "trace.csv").read_bytes() == first
    assert (out / "kernels.sepk").read_bytes() == kernels


def test_learned_transform_flag(tmp_path, scenario):
    cfg = tmp_path / "toy.json"
    cfg.write_text(json.dumps({"steps": 5, "feature_dim": 40, "batch": {"count": 1, "length": 800}}))
    assert main(["toytrain", str(cfg), "--out-dir", str(tmp_path / "t")]) == 0
    sim = _simulate(tmp_path, scenario)
    out = tmp_path / "sep"
    assert main(["separate", str(sim / "ex_00000" / "mixture.wav"), str(out), "--masks", "identity",
                 "--transform", f"learned:{tmp_path / 't' / 'kernels.sepk'}", "--frame", "4/2"]) == 0
    assert (out / "est_2.wav").exists()


def test_console_entry_point_runs():
    out = subprocess.run([sys.executable, "-m", "sepkit.cli", "--version"], capture_output=True,
                         text=True)
    assert out.returncode == 0 and "sepkit" in out.stdout


@pytest.mark.slow
def test_simulate_hundred_examples_within_budget(tmp_path):
    import time
    p = tmp_path / "sc.json"
    p.write_text(json.dumps({"num_sources": 2, "seed": 1, "length": 64000}))
    start = time.perf_counter()
    assert main(["simulate", str(p), str(tmp_path / "o"), "-n", "100"]) == 0
    assert time.perf_counter() - start < 60
