"""``qpb`` command line: run, scan, vector, subchip, diff.

Reports are canonical JSON (sorted keys), so equal inputs give byte-equal
files. Without ``--out`` the report goes to stdout; with it, a short table
is printed instead. Every failure exits with status 2 and one line on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Sequence

from . import bench
from .bench import (
    EXHAUSTIVE_CAP,
    METHODS,
    compare_reports,
    dumps_report,
    find_effective_subchip,
    placements_for,
    plot_data,
    protocol_vector,
    scan_csv,
    scan_protocol,
    scan_report,
    subchip_report,
    vector_report,
)
from .fixtures import device as load_device_fixture
from .fixtures import noise_model as load_noise_fixture
from .protocols import ProtocolKind, ProtocolSpec

__all__ = ["main", "build_parser", "RunConfig"]

EXIT_USAGE = 2


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # one diagnostic line, no usage dump
        raise CliError(message)


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _common(p: argparse.ArgumentParser, protocol: bool = True) -> None:
    p.add_argument("--device", required=True, help="device JSON file or shipped fixture name")
    p.add_argument("--noise", required=True, help="noise JSON file or shipped fixture name")
    p.add_argument("--shots", type=_positive, default=1000)
    p.add_argument("--seed", type=int, default=None, help="master seed (default: $QPB_SEED, else 0)")
    p.add_argument("--threads", type=_positive, default=1, help="worker threads; results do not depend on it")
    p.add_argument("--method", choices=METHODS, default="auto")
    p.add_argument("--out", type=Path, default=None, help="report file (default: stdout)")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--start-qubit", type=int, default=None, help="only placements whose Alice block starts here")
    p.add_argument("--qubits", type=_int_list, default=None, help="restrict to this qubit subset, e.g. 0,1,2,5")
    if protocol:
        p.add_argument("--protocol", required=True, choices=[k.value for k in ProtocolKind])
        p.add_argument("--M", type=int, default=None)
        p.add_argument("--J", type=int, default=None)
        p.add_argument("--bell-index", type=int, default=0, choices=range(4))
        p.add_argument("--message", default=None, choices=("00", "01", "10", "11"),
                       help="superdense message (default: average all four)")
        p.add_argument("--ancilla-mode", choices=("zero", "random"), default="zero")
        p.add_argument("--multipath", action="store_true", help="one transfer path per sent qubit")
    p.add_argument("--exec-mode", choices=("deferred", "midcircuit"), default="deferred")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qpb", description="Protocol-based quantumness benchmarks on noisy device models.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run one protocol on selected placements")
    _common(run)
    run.add_argument("--alice", type=_int_list, default=None, help="Alice block, e.g. 0,1")
    run.add_argument("--bob", type=_int_list, default=None, help="Bob block")
    run.add_argument("--distance", type=int, default=None, help="only placements at this distance")

    scan = sub.add_parser("scan", help="run one protocol on every placement")
    _common(scan)
    scan.add_argument("--plot-out", type=Path, default=None,
                      help="plot data file (default: next to --out with a .plot.csv suffix)")

    vec = sub.add_parser("vector", help="worst fidelity of each of the five basic protocols")
    _common(vec, protocol=False)

    sc = sub.add_parser("subchip", help="search for the largest passing qubit subset")
    _common(sc, protocol=False)
    sc.add_argument("--strategy", choices=("greedy", "exhaustive"), default="greedy")
    sc.add_argument("--protocol", action="append", default=None, choices=[k.value for k in ProtocolKind],
                    help="protocol(s) to require (repeatable; default: the five basic ones)")
    sc.add_argument("--M", type=int, default=None)
    sc.add_argument("--J", type=int, default=None)

    diff = sub.add_parser("diff", help="fidelity differences between two scan reports")
    diff.add_argument("a", type=Path)
    diff.add_argument("b", type=Path)
    diff.add_argument("--out", type=Path, default=None)
    return parser


class RunConfig:
    """Validated inputs shared by the benchmark commands."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.device = load_device_fixture(args.device)
        self.noise = load_noise_fixture(args.noise)
        self.shots = args.shots
        self.seed = _seed(args.seed)
        if args.start_qubit is not None and not 0 <= args.start_qubit < self.device.num_qubits:
            raise CliError(f"--start-qubit {args.start_qubit} is not a qubit of {self.device.name or 'the device'}")
        if args.qubits is not None:
            bad = [q for q in args.qubits if not 0 <= q < self.device.num_qubits]
            if bad:
                raise CliError(f"--qubits contains unknown qubit(s) {bad}")

    def spec(self, kind: str | None = None) -> ProtocolSpec:
        a = self.args
        return ProtocolSpec(
            kind or a.protocol,
            M=a.M,
            J=a.J,
            bell_index=getattr(a, "bell_index", 0),
            ancilla_mode=getattr(a, "ancilla_mode", "zero"),
            exec_mode=a.exec_mode,
            message=getattr(a, "message", None),
        )


def _seed(value: int | None) -> int:
    if value is not None:
        return value
    env = os.environ.get("QPB_SEED")
    if env is None or env == "":
        return 0
    try:
        return int(env)
    except ValueError:
        raise CliError(f"QPB_SEED must be an integer, got {env!r}") from None


def _write(path: Path | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        path.write_text(text)


def _emit(cfg: RunConfig, report: dict, table: str) -> None:
    a = cfg.args
    text = scan_csv(report) if a.format == "csv" and "scan" in report else dumps_report(report)
    _write(a.out, text)
    if a.out is not None:
        print(table)


def _fmt(x: float | None) -> str:
    return "-" if x is None else f"{x:.4f}"


def _scan_table(report: dict) -> str:
    lines = [f"{report['label']}  threshold {_fmt(report['threshold'])}  ({len(report['results'])} placements)",
             f"{'L':>3} {'min':>8} {'max':>8} {'paths':>6}"]
    for r in report["scan"]:
        lines.append(f"{r['L']:>3} {_fmt(r['min']):>8} {_fmt(r['max']):>8} {r['num_paths']:>6}")
    return "\n".join(lines)


def _placement_filter(cfg: RunConfig, spec: ProtocolSpec):
    a = cfg.args
    ps = placements_for(cfg.device, spec, start=a.start_qubit, qubits=a.qubits, multipath=a.multipath)
    if a.alice is not None:
        ps = [p for p in ps if list(p.alice) == a.alice]
    if a.bob is not None:
        ps = [p for p in ps if list(p.bob) == a.bob]
    if a.distance is not None:
        ps = [p for p in ps if p.distance == a.distance]
    if not any(x is not None for x in (a.alice, a.bob, a.distance, a.start_qubit, a.qubits)) and ps:
        # no selection: the first placement at the largest distance
        far = max(p.distance for p in ps)
        ps = [next(p for p in ps if p.distance == far)]
    if not ps:
        raise CliError(f"no placement of {spec.label} matches the selection")
    return ps


def cmd_run(cfg: RunConfig) -> int:
    spec = cfg.spec()
    ps = _placement_filter(cfg, spec)
    results = bench.run_placements(cfg.device, cfg.noise, spec, ps, cfg.shots, cfg.seed, cfg.args.method, cfg.args.threads)
    out = bench.ScanOutput(results, bench.aggregate(spec.label, results))
    report = scan_report(cfg.device, cfg.noise, spec, cfg.shots, cfg.seed, out)
    lines = [f"{spec.label}  threshold {_fmt(spec.threshold)}"]
    for r in results:
        lines.append(f"alice={list(r.placement.alice)} bob={list(r.placement.bob)} L={r.distance} "
                     f"fidelity={_fmt(r.value)} +/- {_fmt(r.std_error)} {r.verdict}")
    _emit(cfg, report, "\n".join(lines))
    return 0


def cmd_scan(cfg: RunConfig) -> int:
    a = cfg.args
    spec = cfg.spec()
    out = scan_protocol(
        cfg.device, cfg.noise, spec, cfg.shots, cfg.seed,
        start=a.start_qubit, qubits=a.qubits, multipath=a.multipath, method=a.method, threads=a.threads,
    )
    report = scan_report(cfg.device, cfg.noise, spec, cfg.shots, cfg.seed, out)
    _emit(cfg, report, _scan_table(report))
    plot_path = a.plot_out
    if plot_path is None and a.out is not None:
        plot_path = a.out.with_suffix(".plot.csv")
    if plot_path is not None:
        plot_path.write_text(plot_data(report))
    return 0


def cmd_vector(cfg: RunConfig) -> int:
    a = cfg.args
    if a.format == "csv":
        raise CliError("csv output is only available for run and scan")
    v = protocol_vector(
        cfg.device, cfg.noise, cfg.shots, cfg.seed,
        start=a.start_qubit, qubits=a.qubits, method=a.method, threads=a.threads, exec_mode=a.exec_mode,
    )
    report = vector_report(cfg.device, cfg.noise, cfg.shots, cfg.seed, v)
    lines = [f"{'protocol':<14} {'worst':>8} {'bound':>8}  verdict"]
    for r, t, q in zip(v.worst, v.thresholds, v.verdicts):
        lines.append(f"{r.spec.label:<14} {_fmt(r.value):>8} {_fmt(t):>8}  {'quantum' if q else 'classical'}")
    _emit(cfg, report, "\n".join(lines))
    return 0


def cmd_subchip(cfg: RunConfig) -> int:
    a = cfg.args
    if a.format == "csv":
        raise CliError("csv output is only available for run and scan")
    if a.strategy == "exhaustive" and len(cfg.device.nodes) > EXHAUSTIVE_CAP:
        raise CliError(f"exhaustive capped at {EXHAUSTIVE_CAP} qubits; device has {len(cfg.device.nodes)}")
    specs = [cfg.spec(k) for k in a.protocol] if a.protocol else bench.basic_specs(a.exec_mode)
    g = cfg.device.subgraph(a.qubits) if a.qubits is not None else cfg.device
    s = find_effective_subchip(g, cfg.noise, specs, cfg.shots, cfg.seed, a.strategy, method=a.method, threads=a.threads)
    report = subchip_report(cfg.device, cfg.noise, cfg.shots, cfg.seed, s)
    lines = [f"retained ({s.effective_qubits}): {list(s.retained)}", f"excluded: {list(s.excluded)}"]
    lines += [f"  {k:<18} worst {_fmt(v)}" for k, v in s.vector.items()]
    _emit(cfg, report, "\n".join(lines))
    return 0


def cmd_diff(args: argparse.Namespace) -> int:
    for p in (args.a, args.b):
        if not p.exists():
            raise CliError(f"no such report: {p}")
    try:
        d = compare_reports(args.a, args.b)
    except json.JSONDecodeError as exc:
        raise CliError(f"report is not valid JSON ({exc.msg})") from None
    except KeyError as exc:
        raise CliError(f"report is missing field {exc}") from None
    _write(args.out, dumps_report(d))
    if args.out is not None:
        lines = [f"{'L':>3} {'d(min)':>9} {'d(max)':>9}"]
        lines += [f"{r['L']:>3} {r['min_delta']:>+9.4f} {r['max_delta']:>+9.4f}" for r in d["scan"]]
        print("\n".join(lines))
    return 0


COMMANDS = {"run": cmd_run, "scan": cmd_scan, "vector": cmd_vector, "subchip": cmd_subchip}


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command == "diff":
            return cmd_diff(args)
        return COMMANDS[args.command](RunConfig(args))
    except (CliError, OSError, ValueError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"qpb: error: {msg}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
