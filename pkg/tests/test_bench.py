from __future__ import annotations

import csv
import io
import json
import math

import pytest

from qpbench.bench import (
    BenchError,
    DeviceTooSmall,
    NoPassingSubchip,
    TopologyMismatch,
    aggregate,
    basic_specs,
    compare_reports,
    dumps_report,
    find_effective_subchip,
    placement_seed,
    plot_data,
    protocol_vector,
    run_placement,
    run_placements,
    scan_csv,
    scan_protocol,
    scan_report,
)
from qpbench.fixtures import device, noise_model
from qpbench.noise import NoiseModel
from qpbench.protocols import THRESHOLD_VECTOR, ProtocolKind, ProtocolSpec
from qpbench.topology import InvalidIndex, Placement, line_graph

DN = ProtocolSpec(ProtocolKind.DO_NOTHING)


def test_noiseless_scan_line6(line6, noiseless):
    out = scan_protocol(line6, noiseless, DN, 200, 7)
    assert len(out.results) == 30
    assert [r.L for r in out.scan.rows] == [1, 2, 3, 4, 5]
    assert all(r.min_fidelity == r.max_fidelity == 1.0 for r in out.scan.rows)
    assert sum(r.num_paths for r in out.scan.rows) == 30


def test_scan_rows_sorted_and_ordered(line6, toy):
    out = scan_protocol(line6, toy, ProtocolSpec(ProtocolKind.BELL_TRANSFER), 2000, 1)
    Ls = [r.L for r in out.scan.rows]
    assert Ls == sorted(Ls)
    for row in out.scan.rows:
        vals = [r.value for r in out.results if r.distance == row.L]
        assert row.min_fidelity == min(vals) <= row.max_fidelity == max(vals)


def test_exact_method_monotone_in_distance(line6, toy):
    out = scan_protocol(line6, toy, DN, 1000, 0, method="exact")
    mins = [r.min_fidelity for r in out.scan.rows]
    assert all(a > b for a, b in zip(mins, mins[1:]))


def test_methods_agree(line6, toy):
    spec = ProtocolSpec(ProtocolKind.TELEPORTATION)
    p = Placement.from_line(range(6), 3, 1)
    exact = run_placement(line6, toy, spec, p, 20000, 2, "exact")
    for m in ("sampled", "trajectory", "auto"):
        r = run_placement(line6, toy, spec, p, 20000, 2, m)
        assert abs(r.value - exact.value) < 4 * exact.std_error
    with pytest.raises(BenchError):
        run_placement(line6, toy, spec, p, 10, 2, "guess")
    with pytest.raises(BenchError):
        run_placement(line6, toy, spec, p, 0, 2)


def test_run_is_seeded(line6, toy):
    p = Placement.from_line(range(6), 1, 1)
    a = run_placement(line6, toy, DN, p, 3000, 5)
    assert a == run_placement(line6, toy, DN, p, 3000, 5)
    assert a.value != run_placement(line6, toy, DN, p, 3000, 6).value


def test_placement_seed_ignores_exec_mode():
    p = Placement.from_line(range(4), 3, 1)
    a = ProtocolSpec(ProtocolKind.TELEPORTATION, exec_mode="deferred")
    b = ProtocolSpec(ProtocolKind.TELEPORTATION, exec_mode="midcircuit")
    assert placement_seed(1, a, p).entropy == placement_seed(1, b, p).entropy
    assert placement_seed(1, a, p).generate_state(2).tolist() != placement_seed(
        1, ProtocolSpec(ProtocolKind.DO_NOTHING), Placement.from_line(range(4), 1, 1)
    ).generate_state(2).tolist()


def test_threads_do_not_change_results(line6, toy):
    ps = [Placement.from_line(range(i, 6), 1, 1) for i in range(5)]
    assert run_placements(line6, toy, DN, ps, 2000, 3) == run_placements(line6, toy, DN, ps, 2000, 3, threads=4)


def test_cache_reuse(line6, toy):
    ps = [Placement.from_line(range(4), 1, 1)]
    cache: dict = {}
    a = run_placements(line6, toy, DN, ps, 500, 3, cache=cache)
    assert len(cache) == 1 and run_placements(line6, toy, DN, ps, 500, 3, cache=cache)[0] is a[0]


def test_start_filter(kolkata, noiseless):
    out = scan_protocol(kolkata, noiseless, ProtocolSpec(ProtocolKind.BELL_TRANSFER), 10, 0, start=0)
    assert out.results and all(r.placement.alice[0] == 0 for r in out.results)


def test_device_too_small(noiseless):
    g = line_graph(5)
    with pytest.raises(DeviceTooSmall):
        scan_protocol(g, noiseless, ProtocolSpec(ProtocolKind.ENT_SWAP), 10, 0)
    with pytest.raises(DeviceTooSmall):
        protocol_vector(g, noiseless, 10, 0)
    with pytest.raises(DeviceTooSmall, match="no placement"):
        scan_protocol(line_graph(8), noiseless, ProtocolSpec(ProtocolKind.BELL_TRANSFER), 10, 0, qubits=[0, 1, 3, 4])
    with pytest.raises(InvalidIndex):
        scan_protocol(line_graph(8), noiseless, DN, 10, 0, start=99)


def test_noise_model_must_cover_device():
    with pytest.raises(ValueError):
        run_placement(line_graph(6), NoiseModel.ideal(4), DN, Placement.from_line(range(2), 1, 1), 10, 0)


# ---------------------------------------------------------------- vector


def test_vector_noiseless(line6, noiseless):
    v = protocol_vector(line6, noiseless, 100, 0)
    assert v.values == (1.0,) * 5 and v.all_quantum
    assert v.thresholds == THRESHOLD_VECTOR


def test_vector_is_min_over_results(line6, toy):
    v = protocol_vector(line6, toy, 500, 4)
    for value, (label, out) in zip(v.values, v.scans.items()):
        assert value == min(r.value for r in out.results)
        assert value == out.scan.minimum
    assert [s.label for s in basic_specs()] == list(v.scans)


def test_full_depolarization_vector(line6):
    v = protocol_vector(line6, noise_model("full_depolarizing"), 100, 0, method="exact")
    assert v.values == pytest.approx((0.5, 0.25, 0.25, 0.5, 0.25), abs=1e-10)
    assert not any(v.verdicts)


# ---------------------------------------------------------------- subchip


@pytest.mark.parametrize("strategy", ["greedy", "exhaustive"])
def test_subchip_bad_qubit(strategy):
    g = device("line8")
    r = find_effective_subchip(g, noise_model("bad_qubit8"), shots=2000, seed=0, strategy=strategy)
    assert r.excluded == (3,)
    assert set(r.retained) | set(r.excluded) == set(g.nodes)
    assert r.vector["ent-swap"] is None
    assert all(v is None or v > t for v, t in zip(r.vector.values(), THRESHOLD_VECTOR))


@pytest.mark.parametrize("name", ["line6", "line8", "complete11"])
@pytest.mark.parametrize("strategy", ["greedy", "exhaustive"])
def test_subchip_noiseless_small(name, strategy, noiseless):
    g = device(name)
    r = find_effective_subchip(g, noiseless, shots=100, strategy=strategy)
    assert r.retained == tuple(g.nodes) and r.excluded == ()


def test_subchip_errors(noiseless):
    with pytest.raises(BenchError, match="exhaustive capped at 12"):
        find_effective_subchip(line_graph(13), noiseless, strategy="exhaustive")
    with pytest.raises(BenchError):
        find_effective_subchip(line_graph(6), noiseless, strategy="random")
    with pytest.raises(DeviceTooSmall):
        find_effective_subchip(line_graph(1), noiseless)
    with pytest.raises(NoPassingSubchip):
        find_effective_subchip(line_graph(6), noise_model("full_depolarizing"), shots=100)


def test_greedy_result_passes_on_rescan():
    g = device("line8")
    bad = noise_model("bad_qubit8")
    r = find_effective_subchip(g, bad, shots=2000, seed=0)
    for spec in basic_specs():
        try:
            out = scan_protocol(g, bad, spec, 2000, 0, qubits=r.retained)
        except DeviceTooSmall:
            continue
        assert all(x.quantum for x in out.results)


# ---------------------------------------------------------------- reports


def _report(g, m, spec, shots=500, seed=3):
    return scan_report(g, m, spec, shots, seed, scan_protocol(g, m, spec, shots, seed))


def test_report_schema_and_determinism(line6, toy):
    a = _report(line6, toy, DN)
    assert {"device", "noise_model", "protocol", "params", "shots", "seed", "results", "scan"} <= set(a)
    assert {"placement", "L", "fidelity", "std_error", "verdict"} <= set(a["results"][0])
    assert dumps_report(a) == dumps_report(_report(line6, toy, DN))
    assert json.loads(dumps_report(a)) == a


def test_csv_and_json_numbers_match(line6, toy):
    rep = _report(line6, toy, ProtocolSpec(ProtocolKind.SUPERDENSE))
    rows = list(csv.DictReader(io.StringIO(scan_csv(rep))))
    for row, s in zip(rows, rep["scan"]):
        assert int(row["L"]) == s["L"]
        assert float(row["min_fidelity"]) == s["min"] and float(row["max_fidelity"]) == s["max"]
        assert json.loads(row["worst_path"]) == s["worst_path"]
    lines = plot_data(rep).splitlines()
    assert lines[0] == "L,min,max" and len(lines) == len(rep["scan"]) + 1


def test_compare_reports(line6, noiseless, toy):
    a = _report(line6, toy, DN, 4000)
    same = compare_reports(a, a)
    assert all(r["delta"] == 0 for r in same["placements"]) and not same["unmatched"]
    assert all(r["min_delta"] == r["max_delta"] == 0 for r in same["scan"])
    d = compare_reports(_report(line6, noiseless, DN, 4000), a)
    assert len(d["placements"]) == 30
    assert all(r["delta"] >= -3 * r["sigma"] for r in d["placements"])
    with pytest.raises(TopologyMismatch):
        compare_reports(a, _report(line_graph(7), noiseless, DN))
    with pytest.raises(BenchError):
        compare_reports(a, _report(line6, toy, ProtocolSpec(ProtocolKind.TELEPORTATION)))


def test_compare_reports_unmatched(line6, toy, tmp_path):
    a = _report(line6, toy, DN)
    b = dict(a, results=a["results"][:-1])
    p = tmp_path / "b.json"
    p.write_text(dumps_report(b))
    d = compare_reports(a, p)
    assert d["unmatched"] == [a["results"][-1]["placement"]]


def test_aggregate_ties_keep_first():
    rs = run_placements(line_graph(4), NoiseModel.ideal(4), DN,
                        [Placement.from_line((0, 1), 1, 1), Placement.from_line((1, 2), 1, 1)], 10, 0)
    row = aggregate("x", rs).row(1)
    assert row.worst_path == row.best_path == rs[0].placement
    with pytest.raises(KeyError):
        aggregate("x", rs).row(2)


# ---------------------------------------------------------------- reference anchors


ANCHORS = [
    (ProtocolSpec(ProtocolKind.DO_NOTHING), 5, 0.882),
    (ProtocolSpec(ProtocolKind.SUPERDENSE), 4, 0.809),
    (ProtocolSpec(ProtocolKind.BELL_TRANSFER), 3, 0.804),
    (ProtocolSpec(ProtocolKind.TELEPORTATION), 3, 0.923),
    (ProtocolSpec(ProtocolKind.ENT_SWAP), 1, 0.826),
    (ProtocolSpec(ProtocolKind.CAT_STATE, M=4, J=2), 1, 0.846),
]


@pytest.mark.parametrize("spec, L, ref", ANCHORS, ids=[a[0].label for a in ANCHORS])
def test_kolkata_like_anchors(line6, spec, L, ref):
    ps = [p for p in scan_protocol(line6, noise_model("kolkata_like"), spec, 10, 0).results if p.distance == L]
    r = run_placement(line6, noise_model("kolkata_like"), spec, ps[0].placement, 1000, 0, "exact")
    assert r.value == pytest.approx(ref, abs=0.05)
