import json

import numpy as np
import pytest

from cjlab.cli import main
from cjlab.detectors import coincidence_probs
from cjlab.distributions import spdc_dist

from helpers import ETA, TRUTH, exact_bundle


def run(*argv):
    return main([str(a) for a in argv])


def write_json(path, doc):
    path.write_text(json.dumps(doc))
    return path


def bundle_files(tmp_path, bundle):
    paths = {}
    for name, st in bundle.items():
        paths[name] = str(write_json(tmp_path / f"{name}.json", st.to_dict()))
    return paths


def test_scan_cj_null(tmp_path):
    out = tmp_path / "scan.csv"
    assert run("scan", "--set", "scan.steps=3", "--set", "scan.start=1",
               "--set", "scan.stop=3", "--set", 'quantities=["cj_p11","P1","C1"]',
               "--out", out) == 0
    data = np.loadtxt(out, delimiter=",", skiprows=1)
    assert out.read_text().splitlines()[0] == "g,cj_p11,P1,C1"
    assert data[1, 0] == 2.0 and abs(data[1, 1]) < 1e-15


def test_scan_hom(tmp_path):
    out = tmp_path / "hom.csv"
    assert run("scan", "--set", "scan.parameter=T", "--set", "scan.start=0",
               "--set", "scan.stop=1", "--set", "scan.steps=5",
               "--set", 'quantities=["hom_p11"]', "--out", out) == 0
    data = np.loadtxt(out, delimiter=",", skiprows=1)
    assert np.allclose(data[:, 1], (1 - 2 * data[:, 0]) ** 2)


def test_scan_rejects_unknown_quantity(tmp_path):
    assert run("scan", "--set", 'quantities=["P1_0det"]', "--out", tmp_path / "x.csv") == 2


def test_simulate_deterministic(tmp_path):
    args = ["simulate", "--seed", 9, "--pulses", 20000, "--set", "model.g=1.5",
            "--record", tmp_path / "r.bin", "--out", tmp_path / "rep.json"]
    assert run(*args) == 0
    first = ((tmp_path / "r.bin").read_bytes(), (tmp_path / "rep.json").read_text())
    assert run(*args) == 0
    assert first == ((tmp_path / "r.bin").read_bytes(), (tmp_path / "rep.json").read_text())
    rep = json.loads(first[1])
    assert rep["seed"] == 9 and len(rep["stats"]["C"]) == 6


def test_simulate_requires_seed(tmp_path):
    assert run("simulate", "--pulses", 10, "--out", tmp_path / "r.json") == 2


def test_fit_report(tmp_path):
    paths = bundle_files(tmp_path, exact_bundle(**TRUTH))
    cfg = write_json(tmp_path / "cfg.json", {"eta": ETA, "runs": paths})
    out = tmp_path / "fit.json"
    assert run("fit", "--config", cfg, "--out", out) == 0
    rep = json.loads(out.read_text())
    for k, v in TRUTH.items():
        assert abs(rep["fit"][k]["value"] - v) < 1e-5
    assert rep["flags"] == []
    # a report doubles as a config
    out2 = tmp_path / "fit2.json"
    assert run("fit", "--config", out, "--out", out2) == 0
    assert json.loads(out2.read_text())["fit"] == rep["fit"]


def test_fit_missing_stage(tmp_path, capsys):
    paths = bundle_files(tmp_path, exact_bundle(**TRUTH))
    del paths["h_input"]
    cfg = write_json(tmp_path / "cfg.json", {"runs": paths})
    assert run("fit", "--config", cfg) == 2
    assert "h_input" in capsys.readouterr().err


def test_fit_vacuum_flagged(tmp_path):
    vac = coincidence_probs(spdc_dist(1.0, 10), ETA, 6)
    paths = bundle_files(tmp_path, {"spdc": vac, "h_input": vac, "v_input": vac})
    cfg = write_json(tmp_path / "cfg.json", {"runs": paths})
    out = tmp_path / "fit.json"
    assert run("fit", "--config", cfg, "--out", out) == 0
    rep = json.loads(out.read_text())
    assert rep["fit"]["g"]["value"] == 1.0
    assert any("bound" in f for f in rep["flags"])


def test_config_errors(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"model": {"g": 2.0,}}')
    assert run("scan", "--config", bad) == 2
    assert "line 1" in capsys.readouterr().err
    assert run("scan", "--set", "model.gain=2") == 2
    assert run("scan", "--set", "model.g=0.5") == 2
    assert run("scan", "--config", tmp_path / "missing.json") == 4


def test_invert(tmp_path):
    st = write_json(tmp_path / "st.json", coincidence_probs(spdc_dist(1.2, 80), ETA, 6).to_dict())
    out = tmp_path / "inv.json"
    assert run("invert", "--set", f"input={json.dumps(str(st))}", "--out", out) == 0
    rep = json.loads(out.read_text())
    assert len(rep["P1"]) == 5
    assert abs(rep["P1"][4] - spdc_dist(1.2, 80).probs[1]) < 1e-3
    assert run("invert", "--set", f"input={json.dumps(str(st))}", "--set", "order=7") == 2


def test_wigner_and_spectral(tmp_path):
    out = tmp_path / "w.json"
    assert run("wigner", "--set", "grid.points=21", "--set", "model.g=1.5",
               "--set", f"outputs.binary={json.dumps(str(tmp_path / 'w.bin'))}",
               "--out", out) == 0
    rep = json.loads(out.read_text())
    assert rep["min"] < 0 and (tmp_path / "w.bin").exists()
    out = tmp_path / "s.json"
    assert run("spectral", "--set", "jsa.grid_size=128", "--set", 'filter={"width": 3.0}',
               "--out", out) == 0
    rep = json.loads(out.read_text())
    assert rep["filtered_purity"] > rep["purity"]
