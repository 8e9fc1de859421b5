from __future__ import annotations

import csv
import io
import json
import subprocess
import sys

import pytest

from qpbench.cli import main


def _run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def _json(capsys, *argv):
    code, out, err = _run(capsys, *argv)
    assert code == 0, err
    return json.loads(out)


BASE = ("--device", "line6", "--noise", "noiseless")


def test_run_do_nothing_noiseless(capsys):
    rep = _json(capsys, "run", *BASE, "--protocol", "do-nothing", "--seed", "7")
    assert rep["seed"] == 7 and len(rep["results"]) == 1
    r = rep["results"][0]
    assert r["fidelity"] == 1.0 and r["L"] == 5 and r["verdict"] == "quantum"


def test_run_cat_state_on_kolkata(capsys):
    rep = _json(capsys, "run", "--device", "kolkata27", "--noise", "toy_uniform", "--protocol", "cat-state",
                "--M", "4", "--J", "2", "--shots", "500", "--distance", "2", "--start-qubit", "0")
    assert rep["label"] == "cat-state{4;2}" and rep["params"]["M"] == 4
    for r in rep["results"]:
        assert r["L"] == 2 and r["verdict"] in ("quantum", "classical")
        assert set(r["placement"]) == {"alice", "bob", "paths"}


def test_run_selects_blocks(capsys):
    rep = _json(capsys, "run", *BASE, "--protocol", "bell-transfer", "--alice", "1,2", "--bob", "4,5")
    assert [r["placement"]["alice"] for r in rep["results"]] == [[1, 2]]


def test_scan_writes_report_table_and_plot(capsys, tmp_path):
    out = tmp_path / "scan.json"
    code, stdout, _ = _run(capsys, "scan", *BASE, "--protocol", "do-nothing", "--out", str(out))
    assert code == 0 and "threshold" in stdout
    rep = json.loads(out.read_text())
    assert len(rep["results"]) == 30
    assert [s["L"] for s in rep["scan"]] == [1, 2, 3, 4, 5]
    assert all(s["min"] == s["max"] == 1.0 for s in rep["scan"])
    plot = (tmp_path / "scan.plot.csv").read_text().splitlines()
    assert plot == ["L,min,max"] + [f"{L},1.0,1.0" for L in range(1, 6)]


def test_scan_start_filter_on_kolkata(capsys):
    rep = _json(capsys, "scan", "--device", "kolkata27", "--noise", "noiseless", "--protocol", "teleportation",
                "--start-qubit", "0", "--shots", "10")
    assert rep["results"] and all(r["placement"]["alice"][0] == 0 for r in rep["results"])


def test_scan_csv_matches_json(capsys, tmp_path):
    args = ("scan", "--device", "line6", "--noise", "toy_uniform", "--protocol", "superdense", "--shots", "300")
    rep = _json(capsys, *args)
    code, text, _ = _run(capsys, *args, "--format", "csv")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(text)))
    assert [(int(r["L"]), float(r["min_fidelity"]), float(r["max_fidelity"])) for r in rows] == [
        (s["L"], s["min"], s["max"]) for s in rep["scan"]
    ]


def test_scan_byte_identical_across_threads(capsys, tmp_path):
    outs = []
    for i, threads in enumerate(("1", "3", "1")):
        p = tmp_path / f"r{i}.json"
        code, _, _ = _run(capsys, "scan", "--device", "line6", "--noise", "toy_uniform", "--protocol", "ent-swap",
                          "--shots", "500", "--seed", "11", "--threads", threads, "--out", str(p))
        assert code == 0
        outs.append(p.read_bytes())
    assert outs[0] == outs[1] == outs[2]


def test_seed_from_environment(capsys, monkeypatch):
    monkeypatch.setenv("QPB_SEED", "42")
    assert _json(capsys, "run", *BASE, "--protocol", "do-nothing")["seed"] == 42
    assert _json(capsys, "run", *BASE, "--protocol", "do-nothing", "--seed", "3")["seed"] == 3
    monkeypatch.setenv("QPB_SEED", "x")
    code, _, err = _run(capsys, "run", *BASE, "--protocol", "do-nothing")
    assert code == 2 and "QPB_SEED" in err


def test_vector(capsys):
    rep = _json(capsys, "vector", *BASE, "--shots", "50")
    assert rep["vector"] == [1.0] * 5
    assert [round(t, 4) for t in rep["thresholds"]] == [0.6667, 0.5, 0.5, 0.6667, 0.5]
    assert rep["verdicts"] == ["quantum"] * 5


def test_subchip(capsys):
    rep = _json(capsys, "subchip", "--device", "line8", "--noise", "bad_qubit8", "--shots", "2000")
    assert rep["excluded"] == [3] and rep["effective_qubits"] == 7
    rep = _json(capsys, "subchip", "--device", "line6", "--noise", "noiseless", "--strategy", "exhaustive",
                "--shots", "50")
    assert rep["retained"] == list(range(6)) and rep["excluded"] == []


def test_diff(capsys, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    _run(capsys, "scan", *BASE, "--protocol", "do-nothing", "--out", str(a))
    _run(capsys, "scan", "--device", "line6", "--noise", "toy_uniform", "--protocol", "do-nothing", "--out", str(b))
    d = _json(capsys, "diff", str(a), str(a))
    assert all(r["delta"] == 0 for r in d["placements"])
    d = _json(capsys, "diff", str(a), str(b))
    assert all(r["delta"] >= -3 * r["sigma"] for r in d["placements"])


def _error(capsys, *argv):
    code, out, err = _run(capsys, *argv)
    assert code == 2
    assert len(err.strip().splitlines()) == 1 and err.startswith("qpb: error: ")
    return err


def test_error_paths(capsys, tmp_path):
    err = _error(capsys, "run", "--device", "line6", "--noise", str(tmp_path / "missing.json"), "--protocol", "do-nothing")
    assert "missing.json" in err
    _error(capsys, "vector", "--device", "line_graph_5_missing", "--noise", "noiseless")
    dev5 = tmp_path / "d5.json"
    dev5.write_text(json.dumps({"name": "five", "num_qubits": 5, "edges": [[0, 1], [1, 2], [2, 3], [3, 4]]}))
    assert "6" in _error(capsys, "vector", "--device", str(dev5), "--noise", "noiseless")
    assert "exhaustive capped at 12" in _error(
        capsys, "subchip", "--device", "kolkata27", "--noise", "noiseless", "--strategy", "exhaustive")
    _error(capsys, "run", *BASE, "--protocol", "cat-state", "--M", "2", "--J", "3")
    _error(capsys, "run", *BASE, "--protocol", "teleportation-ish")
    _error(capsys, "run", *BASE, "--protocol", "do-nothing", "--shots", "0")
    _error(capsys, "run", *BASE, "--protocol", "do-nothing", "--distance", "9")
    _error(capsys, "scan", *BASE, "--protocol", "do-nothing", "--start-qubit", "40")
    _error(capsys, "vector", *BASE, "--format", "csv")
    _error(capsys, "diff", str(tmp_path / "nope.json"), str(tmp_path / "nope.json"))
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    _error(capsys, "diff", str(bad), str(bad))
    _error(capsys)


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "qpbench", "run", "--device", "line6", "--noise", "nowhere"],
                       capture_output=True, text=True)
    assert r.returncode == 2 and r.stderr.count("\n") == 1
