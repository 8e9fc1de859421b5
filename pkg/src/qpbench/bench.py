"""Benchmark orchestration: placement scans, protocol vectors, subchip search.

A run of one protocol on one placement yields a :class:`ProtocolRunResult`.
Every random choice (unitaries, shot sampling) is derived from the master
seed, the protocol parameters and the placement itself, so a placement gives
the same number regardless of which scan, thread or subchip it is run in.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .engine import (
    DEFAULT_DM_CAP,
    DEFAULT_TRAJECTORY_CAP,
    FidelityEstimate,
    TrajectoryConfig,
    exact_probabilities,
    fidelity_from_counts,
    sample_from_distribution,
    sample_trajectories,
    simulated_width,
    success_probability,
)
from .noise import NoiseModel, ValidationError, attach_noise
from .protocols import (
    BASIC_KINDS,
    THRESHOLD_VECTOR,
    ProtocolKind,
    ProtocolSpec,
    build_circuits,
    is_quantum,
    per_qubit_predicates,
    success_predicate,
)
from .topology import (
    ConnectivityGraph,
    Placement,
    device_to_dict,
    enumerate_multipath_placements,
    enumerate_placements,
)

__all__ = [
    "BenchError",
    "DeviceTooSmall",
    "NoPassingSubchip",
    "TopologyMismatch",
    "METHODS",
    "AUTO_EXACT_MAX",
    "EXHAUSTIVE_CAP",
    "ProtocolRunResult",
    "DistanceRow",
    "DistanceScan",
    "ScanOutput",
    "ProtocolVector",
    "SubchipResult",
    "basic_specs",
    "placement_seed",
    "placements_for",
    "run_placement",
    "run_placements",
    "scan_protocol",
    "aggregate",
    "protocol_vector",
    "find_effective_subchip",
    "scan_report",
    "vector_report",
    "subchip_report",
    "dumps_report",
    "scan_csv",
    "plot_data",
    "compare_reports",
]

METHODS = ("auto", "exact", "sampled", "trajectory")
# Largest register the automatic method propagates as a density matrix.
AUTO_EXACT_MAX = 10
EXHAUSTIVE_CAP = 12


class BenchError(ValueError):
    pass


class DeviceTooSmall(BenchError):
    pass


class NoPassingSubchip(BenchError):
    pass


class TopologyMismatch(BenchError):
    pass


# ------------------------------------------------------------------ results


def _est_dict(e: FidelityEstimate) -> dict:
    return {"value": e.value, "std_error": e.std_error}


@dataclass(frozen=True)
class ProtocolRunResult:
    """Fidelity of one protocol on one placement.

    ``per_qubit`` holds the marginal fidelity of each individually scored
    qubit (generalized do-nothing, random-ancilla do-nothing); ``value`` is
    then the worst of them. ``per_message`` holds the four superdense runs
    that ``value`` averages.
    """

    spec: ProtocolSpec
    placement: Placement
    value: float
    std_error: float
    shots: int
    per_qubit: dict[str, FidelityEstimate] = field(default_factory=dict)
    per_message: dict[str, FidelityEstimate] = field(default_factory=dict)

    @property
    def distance(self) -> int:
        return self.placement.distance

    @property
    def threshold(self) -> float:
        return self.spec.threshold

    @property
    def quantum(self) -> bool:
        return is_quantum(self.value, self.threshold)

    @property
    def verdict(self) -> str:
        return "quantum" if self.quantum else "classical"

    def to_dict(self) -> dict:
        d = {
            "placement": self.placement.to_dict(),
            "L": self.distance,
            "fidelity": self.value,
            "std_error": self.std_error,
            "verdict": self.verdict,
        }
        if self.per_qubit:
            d["per_qubit"] = {k: _est_dict(v) for k, v in self.per_qubit.items()}
        if self.per_message:
            d["per_message"] = {k: _est_dict(v) for k, v in self.per_message.items()}
        return d


@dataclass(frozen=True)
class DistanceRow:
    L: int
    min_fidelity: float
    max_fidelity: float
    num_paths: int
    worst_path: Placement
    best_path: Placement

    def to_dict(self) -> dict:
        return {
            "L": self.L,
            "min": self.min_fidelity,
            "max": self.max_fidelity,
            "num_paths": self.num_paths,
            "worst_path": self.worst_path.to_dict(),
            "best_path": self.best_path.to_dict(),
        }


@dataclass(frozen=True)
class DistanceScan:
    protocol: str
    rows: tuple[DistanceRow, ...]

    @property
    def minimum(self) -> float:
        return min(r.min_fidelity for r in self.rows)

    def row(self, L: int) -> DistanceRow:
        for r in self.rows:
            if r.L == L:
                return r
        raise KeyError(L)


class ScanOutput(NamedTuple):
    results: list[ProtocolRunResult]
    scan: DistanceScan


@dataclass(frozen=True)
class ProtocolVector:
    values: tuple[float, ...]
    std_errors: tuple[float, ...]
    worst: tuple[ProtocolRunResult, ...]
    scans: dict[str, ScanOutput]
    thresholds: tuple[float, ...] = THRESHOLD_VECTOR

    @property
    def verdicts(self) -> tuple[bool, ...]:
        return tuple(is_quantum(v, t) for v, t in zip(self.values, self.thresholds))

    @property
    def all_quantum(self) -> bool:
        return all(self.verdicts)


@dataclass(frozen=True)
class SubchipResult:
    """Largest qubit set found on which every enumerated placement passes.

    ``vector`` maps each protocol label to its worst fidelity on the retained
    subgraph, or ``None`` when no placement of that protocol fits.
    """

    retained: tuple[int, ...]
    excluded: tuple[int, ...]
    vector: dict[str, float | None]
    strategy: str
    history: tuple[int, ...] = ()

    @property
    def effective_qubits(self) -> int:
        return len(self.retained)


# ------------------------------------------------------------------ single placement


def basic_specs(exec_mode: str = "deferred") -> list[ProtocolSpec]:
    """The five protocols of the protocol vector, in vector order."""
    return [
        ProtocolSpec(k, exec_mode=exec_mode if k is ProtocolKind.TELEPORTATION else "deferred")
        for k in BASIC_KINDS
    ]


def placement_seed(seed: int, spec: ProtocolSpec, p: Placement) -> np.random.SeedSequence:
    """Seed material for one (protocol, placement) pair.

    The execution mode is left out on purpose so deferred and mid-circuit
    runs draw identical unitaries and shots.
    """
    code = list(ProtocolKind).index(spec.kind)
    msg = 0 if spec.message is None else 1 + int(spec.message, 2)
    words = [int(seed), code, spec.M or 0, spec.J or 0, spec.bell_index, int(spec.ancilla_mode == "random"), msg]
    for block in (p.alice, p.bob, *p.transfer_paths):
        words += [q + 1 for q in block] + [0]
    return np.random.SeedSequence(words)


def _estimate(dist_or_counts, predicate, shots: int, exact: bool) -> FidelityEstimate:
    if exact:
        v = min(max(success_probability(dist_or_counts, predicate), 0.0), 1.0)
        return FidelityEstimate(v, math.sqrt(v * (1 - v) / shots))
    return fidelity_from_counts(dist_or_counts, predicate)


def run_placement(
    g: ConnectivityGraph,
    noise: NoiseModel,
    spec: ProtocolSpec,
    p: Placement,
    shots: int,
    seed: int,
    method: str = "auto",
) -> ProtocolRunResult:
    """Build, compile and execute ``spec`` on ``p``.

    ``exact`` reports the exact success probability (with the binomial error
    ``shots`` would give), ``sampled`` draws shots from the exact
    distribution, ``trajectory`` runs state-vector trajectories and ``auto``
    picks ``sampled`` when the engines carry at most :data:`AUTO_EXACT_MAX`
    wires (noise-free swaps are relabelled, not simulated).
    """
    if method not in METHODS:
        raise BenchError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    if shots < 1:
        raise BenchError("shots must be >= 1")
    if noise.num_qubits < g.num_qubits:
        raise ValidationError(f"noise model covers {noise.num_qubits} qubits, device has {g.num_qubits}")
    ss = placement_seed(seed, spec, p)
    unitary_seed, sample_seed = (int(x) for x in ss.generate_state(2, dtype=np.uint64))
    circuits = build_circuits(spec, p, unitary_seed, g.num_qubits)
    joint, per_qubit = [], {}
    for j, c in enumerate(circuits):
        stream = attach_noise(c, noise)
        n = simulated_width(stream)
        m = method
        if m == "auto":
            m = "sampled" if n <= AUTO_EXACT_MAX else "trajectory"
        run_seed = int(np.random.SeedSequence([sample_seed, j]).generate_state(1, dtype=np.uint64)[0])
        if m == "trajectory":
            data = sample_trajectories(stream, TrajectoryConfig(shots, run_seed, DEFAULT_TRAJECTORY_CAP))
        else:
            data = exact_probabilities(stream, cap=DEFAULT_DM_CAP)
            if m == "sampled":
                data = sample_from_distribution(data, shots, run_seed)
        is_exact = m == "exact"
        joint.append(_estimate(data, success_predicate(c), shots, is_exact))
        for label, pred in per_qubit_predicates(c).items():
            per_qubit[label] = _estimate(data, pred, shots, is_exact)

    per_message = {}
    if per_qubit:
        worst = min(per_qubit.values(), key=lambda e: e.value)
        value, se = worst.value, worst.std_error
    elif len(joint) > 1:
        per_message = dict(zip(("00", "01", "10", "11"), joint))
        value = sum(e.value for e in joint) / len(joint)
        se = math.sqrt(sum(e.std_error ** 2 for e in joint)) / len(joint)
    else:
        value, se = joint[0].value, joint[0].std_error
    return ProtocolRunResult(spec, p, value, se, shots, per_qubit, per_message)


# ------------------------------------------------------------------ scans


def placements_for(
    g: ConnectivityGraph,
    spec: ProtocolSpec,
    *,
    start: int | None = None,
    qubits: Iterable[int] | None = None,
    linear_only: bool = True,
    multipath: bool = False,
) -> list[Placement]:
    """Placements of ``spec`` on ``g``, optionally restricted.

    ``start`` keeps placements whose Alice block begins at that qubit;
    ``qubits`` restricts everything to the induced subgraph.
    """
    h = g.subgraph(qubits) if qubits is not None else g
    n_a, n_b = spec.node_sizes
    if multipath:
        return enumerate_multipath_placements(h, n_a, n_b, spec.transfers, start=start)
    return enumerate_placements(h, n_a, n_b, linear_only=linear_only, start=start)


def aggregate(label: str, results: Sequence[ProtocolRunResult]) -> DistanceScan:
    """Per-distance min/max. Ties keep the earliest result."""
    by_l: dict[int, list[ProtocolRunResult]] = {}
    for r in results:
        by_l.setdefault(r.distance, []).append(r)
    rows = []
    for L in sorted(by_l):
        rs = by_l[L]
        lo = min(rs, key=lambda r: r.value)
        hi = max(rs, key=lambda r: r.value)
        rows.append(DistanceRow(L, lo.value, hi.value, len(rs), lo.placement, hi.placement))
    return DistanceScan(label, tuple(rows))


def run_placements(
    g: ConnectivityGraph,
    noise: NoiseModel,
    spec: ProtocolSpec,
    placements: Sequence[Placement],
    shots: int,
    seed: int,
    method: str = "auto",
    threads: int = 1,
    cache: dict | None = None,
) -> list[ProtocolRunResult]:
    """Run several placements, optionally memoised in ``cache`` by (spec, placement)."""
    todo = [p for p in placements if cache is None or (spec, p.key()) not in cache]

    def one(p):
        return run_placement(g, noise, spec, p, shots, seed, method)

    if threads > 1 and len(todo) > 1:
        with ThreadPoolExecutor(threads) as pool:
            fresh = list(pool.map(one, todo))
    else:
        fresh = [one(p) for p in todo]
    if cache is None:
        return fresh
    for r in fresh:
        cache[(spec, r.placement.key())] = r
    return [cache[(spec, p.key())] for p in placements]


def scan_protocol(
    g: ConnectivityGraph,
    noise: NoiseModel,
    spec: ProtocolSpec,
    shots: int,
    seed: int,
    *,
    start: int | None = None,
    qubits: Iterable[int] | None = None,
    linear_only: bool = True,
    multipath: bool = False,
    method: str = "auto",
    threads: int = 1,
) -> ScanOutput:
    """Run ``spec`` on every placement and aggregate per distance."""
    avail = len(set(qubits)) if qubits is not None else len(g.nodes)
    if avail < spec.min_qubits:
        raise DeviceTooSmall(f"{spec.label} needs {spec.min_qubits} qubits, device offers {avail}")
    ps = placements_for(g, spec, start=start, qubits=qubits, linear_only=linear_only, multipath=multipath)
    if not ps:
        raise DeviceTooSmall(f"no placement of {spec.label} fits the selected qubits")
    results = run_placements(g, noise, spec, ps, shots, seed, method, threads)
    return ScanOutput(results, aggregate(spec.label, results))


def protocol_vector(
    g: ConnectivityGraph,
    noise: NoiseModel,
    shots: int,
    seed: int,
    *,
    start: int | None = None,
    qubits: Iterable[int] | None = None,
    method: str = "auto",
    threads: int = 1,
    exec_mode: str = "deferred",
    multipath: bool = False,
) -> ProtocolVector:
    """Worst fidelity of each basic protocol over all its placements."""
    avail = len(set(qubits)) if qubits is not None else len(g.nodes)
    if avail < 6:
        raise DeviceTooSmall(f"the protocol vector needs at least 6 qubits, device offers {avail}")
    scans, worst = {}, []
    for spec in basic_specs(exec_mode):
        out = scan_protocol(
            g, noise, spec, shots, seed,
            start=start, qubits=qubits, method=method, threads=threads, multipath=multipath,
        )
        scans[spec.label] = out
        worst.append(min(out.results, key=lambda r: r.value))
    return ProtocolVector(
        tuple(r.value for r in worst), tuple(r.std_error for r in worst), tuple(worst), scans
    )


# ------------------------------------------------------------------ subchip search


def find_effective_subchip(
    g: ConnectivityGraph,
    noise: NoiseModel,
    specs: Sequence[ProtocolSpec] | None = None,
    shots: int = 1000,
    seed: int = 0,
    strategy: str = "greedy",
    *,
    method: str = "auto",
    threads: int = 1,
    linear_only: bool = True,
) -> SubchipResult:
    """Drop qubits until every placement of every protocol passes.

    A subset passes when each placement enumerable inside its induced
    subgraph beats the protocol's threshold and at least one placement of
    some protocol fits. ``greedy`` repeatedly removes the qubit that occurs
    most often in failing placements (lowest index on ties). ``exhaustive``
    tries subsets from largest to smallest in lexicographic order and
    returns the first passing one.
    """
    specs = list(specs) if specs is not None else basic_specs()
    if not specs:
        raise BenchError("no protocols given")
    nodes = g.nodes
    smallest = min(s.min_qubits for s in specs)
    if len(nodes) < smallest:
        raise DeviceTooSmall(f"device has {len(nodes)} qubits, smallest protocol needs {smallest}")
    if strategy == "exhaustive" and len(nodes) > EXHAUSTIVE_CAP:
        raise BenchError(f"exhaustive capped at {EXHAUSTIVE_CAP} qubits, device has {len(nodes)}")
    if strategy not in ("greedy", "exhaustive"):
        raise BenchError(f"unknown strategy {strategy!r}")
    cache: dict = {}

    def evaluate(subset: Sequence[int], stop_early: bool):
        found, failing, vector = False, [], {}
        for spec in specs:
            ps = placements_for(g, spec, qubits=subset, linear_only=linear_only)
            if not ps:
                vector[spec.label] = None
                continue
            found = True
            if stop_early:
                for p in ps:
                    r = run_placements(g, noise, spec, [p], shots, seed, method, 1, cache)[0]
                    if not r.quantum:
                        return False, [r], {}
                rs = [cache[(spec, p.key())] for p in ps]
            else:
                rs = run_placements(g, noise, spec, ps, shots, seed, method, threads, cache)
                failing += [r for r in rs if not r.quantum]
            vector[spec.label] = min(r.value for r in rs)
        return found and not failing, failing, vector

    if strategy == "greedy":
        current = list(nodes)
        removed: list[int] = []
        while True:
            ok, failing, vector = evaluate(current, stop_early=False)
            if ok:
                return SubchipResult(tuple(current), tuple(sorted(removed)), vector, strategy, tuple(removed))
            if not failing or len(current) - 1 < smallest:
                raise NoPassingSubchip("no subchip passes every protocol threshold")
            hits = Counter(q for r in failing for q in r.placement.qubits)
            worst = min(hits, key=lambda q: (-hits[q], q))
            current.remove(worst)
            removed.append(worst)

    for size in range(len(nodes), smallest - 1, -1):
        for subset in itertools.combinations(nodes, size):
            ok, _, _ = evaluate(subset, stop_early=True)
            if ok:
                _, _, vector = evaluate(subset, stop_early=False)
                excluded = tuple(q for q in nodes if q not in subset)
                return SubchipResult(tuple(subset), excluded, vector, strategy)
    raise NoPassingSubchip("no subchip passes every protocol threshold")


# ------------------------------------------------------------------ reports


def _header(g: ConnectivityGraph, noise: NoiseModel, shots: int, seed: int) -> dict:
    return {"device": device_to_dict(g), "noise_model": noise.name, "shots": shots, "seed": seed}


def scan_report(
    g: ConnectivityGraph, noise: NoiseModel, spec: ProtocolSpec, shots: int, seed: int, out: ScanOutput
) -> dict:
    d = _header(g, noise, shots, seed)
    d.update(
        protocol=spec.kind.value,
        label=spec.label,
        params=spec.params(),
        threshold=spec.threshold,
        results=[r.to_dict() for r in out.results],
        scan=[r.to_dict() for r in out.scan.rows],
    )
    return d


def vector_report(g: ConnectivityGraph, noise: NoiseModel, shots: int, seed: int, v: ProtocolVector) -> dict:
    d = _header(g, noise, shots, seed)
    d.update(
        thresholds=list(v.thresholds),
        vector=list(v.values),
        std_errors=list(v.std_errors),
        verdicts=["quantum" if q else "classical" for q in v.verdicts],
        worst=[{"protocol": r.spec.label, **r.to_dict()} for r in v.worst],
        protocols={
            label: {"scan": [r.to_dict() for r in out.scan.rows], "results": [r.to_dict() for r in out.results]}
            for label, out in v.scans.items()
        },
    )
    return d


def subchip_report(g: ConnectivityGraph, noise: NoiseModel, shots: int, seed: int, s: SubchipResult) -> dict:
    d = _header(g, noise, shots, seed)
    d.update(
        strategy=s.strategy,
        retained=list(s.retained),
        excluded=list(s.excluded),
        effective_qubits=s.effective_qubits,
        removal_order=list(s.history),
        vector=s.vector,
    )
    return d


def dumps_report(report: dict) -> str:
    """Canonical JSON text: sorted keys, fixed indentation, trailing newline."""
    return json.dumps(report, sort_keys=True, indent=2) + "\n"


def scan_csv(report: dict) -> str:
    """The scan table of a scan report as CSV."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["L", "min_fidelity", "max_fidelity", "num_paths", "worst_path", "best_path"])
    for r in report["scan"]:
        w.writerow([
            r["L"], repr(r["min"]), repr(r["max"]), r["num_paths"],
            json.dumps(r["worst_path"], sort_keys=True), json.dumps(r["best_path"], sort_keys=True),
        ])
    return buf.getvalue()


def plot_data(report: dict) -> str:
    """Best and worst fidelity per distance, ready for a two-curve plot."""
    lines = ["L,min,max"]
    lines += [f"{r['L']},{r['min']!r},{r['max']!r}" for r in report["scan"]]
    return "\n".join(lines) + "\n"


def _load(report: dict | str | Path) -> dict:
    if isinstance(report, dict):
        return report
    return json.loads(Path(report).read_text())


def _placement_key(d: dict) -> str:
    return json.dumps(d, sort_keys=True)


def compare_reports(a: dict | str | Path, b: dict | str | Path) -> dict:
    """Per-placement and per-distance fidelity differences ``a - b``.

    Placements present in only one report are listed under ``unmatched``.
    """
    ra, rb = _load(a), _load(b)
    da, db = ra["device"], rb["device"]
    ea = {tuple(sorted(e)) for e in da["edges"]}
    eb = {tuple(sorted(e)) for e in db["edges"]}
    if da["num_qubits"] != db["num_qubits"] or ea != eb:
        raise TopologyMismatch("reports were produced on different device topologies")
    if ra.get("label") != rb.get("label"):
        raise BenchError(f"reports cover different protocols: {ra.get('label')} vs {rb.get('label')}")
    fa = {_placement_key(r["placement"]): r for r in ra["results"]}
    fb = {_placement_key(r["placement"]): r for r in rb["results"]}
    rows = []
    for k in sorted(fa.keys() & fb.keys()):
        x, y = fa[k], fb[k]
        rows.append({
            "placement": x["placement"], "L": x["L"], "a": x["fidelity"], "b": y["fidelity"],
            "delta": x["fidelity"] - y["fidelity"],
            "sigma": math.hypot(x["std_error"], y["std_error"]),
        })
    sa = {r["L"]: r for r in ra["scan"]}
    sb = {r["L"]: r for r in rb["scan"]}
    scan = [
        {"L": L, "min_delta": sa[L]["min"] - sb[L]["min"], "max_delta": sa[L]["max"] - sb[L]["max"]}
        for L in sorted(sa.keys() & sb.keys())
    ]
    unmatched = sorted(fa.keys() ^ fb.keys())
    return {"label": ra.get("label"), "placements": rows, "scan": scan, "unmatched": [json.loads(u) for u in unmatched]}
