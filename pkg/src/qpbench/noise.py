"""Calibration-based noise models compiled into Kraus channels.

Every gate is followed by a depolarizing channel of matching arity and then by
thermal relaxation of each touched qubit for the gate duration. Readout error
is a per-qubit confusion matrix applied to the reported classical bits.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .circuit import Circuit, Gate, gate_matrix

__all__ = [
    "NoiseModelError",
    "SchemaError",
    "ValidationError",
    "MissingEdge",
    "KrausChannel",
    "QubitParams",
    "NoiseModel",
    "Instruction",
    "NoisyStream",
    "depolarizing_channel",
    "thermal_relaxation_channel",
    "confusion_matrix",
    "readout_apply",
    "apply_confusion",
    "load_noise_model",
    "attach_noise",
]

COMPLETENESS_TOL = 1e-10


class NoiseModelError(ValueError):
    pass


class SchemaError(NoiseModelError):
    """Field missing or of the wrong type."""


class ValidationError(NoiseModelError):
    """Field present but physically inconsistent."""


class MissingEdge(NoiseModelError):
    pass


@dataclass(frozen=True, eq=False)
class KrausChannel:
    operators: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        ops = tuple(np.asarray(k, dtype=complex) for k in self.operators)
        if not ops:
            raise ValueError("a channel needs at least one Kraus operator")
        d = ops[0].shape[0]
        if any(k.shape != (d, d) for k in ops) or d not in (2, 4):
            raise ValueError("Kraus operators must all be 2x2 or all 4x4")
        total = sum(k.conj().T @ k for k in ops)
        if not np.allclose(total, np.eye(d), atol=COMPLETENESS_TOL, rtol=0):
            raise ValueError("Kraus operators are not trace preserving")
        object.__setattr__(self, "operators", ops)

    @property
    def dim(self) -> int:
        return self.operators[0].shape[0]

    @property
    def arity(self) -> int:
        return 1 if self.dim == 2 else 2

    def is_identity(self) -> bool:
        return self._identity

    @cached_property
    def _identity(self) -> bool:
        if len(self.operators) != 1:
            return False
        k = self.operators[0]
        return bool(np.allclose(k, k[0, 0] * np.eye(self.dim), atol=1e-14) and abs(abs(k[0, 0]) - 1) < 1e-14)

    @cached_property
    def superoperator(self) -> np.ndarray:
        """Matrix acting on the row-major vectorisation of rho."""
        return sum(np.kron(k, k.conj()) for k in self.operators)

    @cached_property
    def mixed_unitary_weights(self) -> np.ndarray | None:
        """Branch probabilities when every operator is a scaled unitary, else None.

        Such branches are chosen independently of the state, which lets the
        trajectory sampler skip the norm computation.
        """
        w = []
        for k in self.operators:
            kk = k.conj().T @ k
            c = kk[0, 0].real
            if not np.allclose(kk, c * np.eye(self.dim), atol=1e-12):
                return None
            w.append(c)
        return np.array(w)

    @cached_property
    def kraus_stack(self) -> np.ndarray:
        return np.stack(self.operators)

    @cached_property
    def effects(self) -> np.ndarray:
        """The POVM elements ``K^dagger K``, stacked."""
        return np.stack([k.conj().T @ k for k in self.operators])

    @cached_property
    def unitary_stack(self) -> np.ndarray:
        """Operators rescaled to unitaries; only meaningful for mixed-unitary channels."""
        w = self.mixed_unitary_weights
        if w is None:
            raise ValueError("channel is not a mixture of unitaries")
        return np.stack([k / math.sqrt(c) if c > 0 else k for k, c in zip(self.operators, w)])

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return sum(k @ rho @ k.conj().T for k in self.operators)


_P1 = [np.eye(2), np.array([[0, 1], [1, 0]]), np.array([[0, -1j], [1j, 0]]), np.array([[1, 0], [0, -1]])]


@lru_cache(maxsize=4096)
def depolarizing_channel(p: float, arity: int = 1) -> KrausChannel:
    """With probability ``p`` replace the state by the maximally mixed one."""
    if not 0 <= p <= 1:
        raise ValueError(f"depolarizing probability must be in [0,1], got {p}")
    if arity not in (1, 2):
        raise ValueError("arity must be 1 or 2")
    if p == 0:
        return KrausChannel((np.eye(2 ** arity),))
    paulis = _P1 if arity == 1 else [np.kron(a, b) for a, b in itertools.product(_P1, _P1)]
    d2 = len(paulis)
    ops = [math.sqrt(1 - p + p / d2) * paulis[0]]
    ops += [math.sqrt(p / d2) * s for s in paulis[1:]]
    return KrausChannel(tuple(ops))


@lru_cache(maxsize=4096)
def thermal_relaxation_channel(t1: float, t2: float, duration: float) -> KrausChannel:
    """Amplitude damping towards ``|0>`` plus pure dephasing.

    Excited population decays as ``exp(-t/t1)`` and coherences as
    ``exp(-t/t2)``; infinite times switch the corresponding process off.
    """
    if duration < 0:
        raise ValueError("duration must be non-negative")
    if t1 <= 0 or t2 <= 0:
        raise ValueError("t1 and t2 must be positive")
    if t2 > 2 * t1 * (1 + 1e-12):
        raise ValueError(f"t2={t2} exceeds 2*t1={2 * t1}")
    rate1 = 0.0 if math.isinf(t1) else 1 / t1
    rate2 = 0.0 if math.isinf(t2) else 1 / t2
    gamma = -math.expm1(-duration * rate1)
    # extra coherence decay on top of what amplitude damping already gives
    phase_rate = max(rate2 - rate1 / 2, 0.0)
    lam = -math.expm1(-2 * duration * phase_rate)
    if gamma == 0 and lam == 0:
        return KrausChannel((np.eye(2),))
    ops = [np.diag([1.0, math.sqrt((1 - gamma) * (1 - lam))])]
    if lam > 0:
        ops.append(np.diag([0.0, math.sqrt((1 - gamma) * lam)]))
    if gamma > 0:
        ops.append(np.array([[0.0, math.sqrt(gamma)], [0.0, 0.0]]))
    return KrausChannel(tuple(ops))


def confusion_matrix(p01: float, p10: float) -> np.ndarray:
    """Row ``i`` holds ``p(read j | true i)``; ``p01`` = P(read 1 | 0), ``p10`` = P(read 0 | 1)."""
    return np.array([[1 - p01, p01], [p10, 1 - p10]])


@dataclass(frozen=True)
class QubitParams:
    t1: float  # seconds, inf allowed
    t2: float
    readout_p01: float
    readout_p10: float
    p1q: float

    @property
    def readout(self) -> np.ndarray:
        return confusion_matrix(self.readout_p01, self.readout_p10)


@dataclass(frozen=True)
class NoiseModel:
    name: str
    num_qubits: int
    qubits: tuple[QubitParams, ...]
    gate1q_time: float  # seconds
    gate2q_time: float
    measure_time: float
    edge_p2q: Mapping[tuple[int, int], float] = field(default_factory=dict)
    default_p2q: float | None = None
    swap_as_cnots: bool = False
    idle_relaxation: bool = False

    def __post_init__(self) -> None:
        if len(self.qubits) != self.num_qubits:
            raise ValidationError(f"expected {self.num_qubits} qubit entries, got {len(self.qubits)}")
        for i, q in enumerate(self.qubits):
            _validate_qubit(i, q)
        edges = {}
        for (a, b), p in dict(self.edge_p2q).items():
            _check_prob(p, f"p2q of edge ({a},{b})")
            edges[(min(a, b), max(a, b))] = float(p)
        object.__setattr__(self, "edge_p2q", edges)
        if self.default_p2q is not None:
            _check_prob(self.default_p2q, "default p2q")
        for t in (self.gate1q_time, self.gate2q_time, self.measure_time):
            if not t >= 0:
                raise ValidationError("durations must be non-negative")

    @classmethod
    def ideal(cls, num_qubits: int, name: str = "noiseless") -> "NoiseModel":
        q = QubitParams(math.inf, math.inf, 0.0, 0.0, 0.0)
        return cls(name, num_qubits, (q,) * num_qubits, 0.0, 0.0, 0.0, {}, 0.0)

    @classmethod
    def uniform(
        cls,
        num_qubits: int,
        *,
        t1: float = math.inf,
        t2: float = math.inf,
        readout: float = 0.0,
        p1q: float = 0.0,
        p2q: float = 0.0,
        gate1q_time: float = 0.0,
        gate2q_time: float = 0.0,
        measure_time: float = 0.0,
        name: str = "uniform",
    ) -> "NoiseModel":
        q = QubitParams(t1, t2, readout, readout, p1q)
        return cls(name, num_qubits, (q,) * num_qubits, gate1q_time, gate2q_time, measure_time, {}, p2q)

    def p2q(self, a: int, b: int) -> float:
        key = (min(a, b), max(a, b))
        if key in self.edge_p2q:
            return self.edge_p2q[key]
        if self.default_p2q is None:
            raise MissingEdge(f"no two-qubit error rate for pair {key} and no default")
        return self.default_p2q

    def readout(self, q: int) -> np.ndarray:
        return self.qubits[q].readout

    def with_qubit(self, index: int, **changes) -> "NoiseModel":
        """Copy with one qubit's parameters replaced."""
        from dataclasses import replace

        qs = list(self.qubits)
        qs[index] = replace(qs[index], **changes)
        return replace(self, qubits=tuple(qs))


def _check_prob(p, what: str) -> None:
    if not isinstance(p, (int, float)) or isinstance(p, bool) or not 0 <= p <= 1:
        raise ValidationError(f"{what} must be a probability, got {p!r}")


def _validate_qubit(i: int, q: QubitParams) -> None:
    if not q.t1 > 0 or not q.t2 > 0:
        raise ValidationError(f"qubit {i}: T1 and T2 must be positive")
    if q.t2 > 2 * q.t1 * (1 + 1e-12):
        raise ValidationError(f"qubit {i}: T2={q.t2} exceeds 2*T1={2 * q.t1}")
    _check_prob(q.readout_p01, f"qubit {i} readout_p01")
    _check_prob(q.readout_p10, f"qubit {i} readout_p10")
    _check_prob(q.p1q, f"qubit {i} p1q")


_QUBIT_FIELDS = ("t1_us", "t2_us", "readout_p01", "readout_p10", "p1q")


def _number(v, what: str, allow_inf: bool = False) -> float:
    if allow_inf and (v is None or v in ("inf", "Infinity")):
        return math.inf
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise SchemaError(f"{what} must be a number, got {v!r}")
    return float(v)


def load_noise_model(source: str | Path | dict) -> NoiseModel:
    """Parse and validate a calibration file.

    Schema::

        {"name": str, "num_qubits": int,
         "defaults": {"t1_us", "t2_us", "readout_p01", "readout_p10", "p1q", "p2q"?},
         "qubits": [{"index"?, <any default field>}, ...],
         "edges": [{"pair": [i, j], "p2q": float}, ...],
         "durations_ns": {"gate1q", "gate2q", "measure"},
         "options": {"swap_as_cnots": bool, "idle_relaxation": bool}}

    ``t1_us``/``t2_us`` may be ``null`` for an infinite time. Qubit entries
    are positional unless they carry ``index``; missing fields fall back to
    ``defaults``.
    """
    if isinstance(source, dict):
        data = source
    else:
        try:
            with open(source) as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{source}: not valid JSON ({exc.msg})") from None
    if not isinstance(data, dict):
        raise SchemaError("noise file must hold a JSON object")
    for key in ("name", "num_qubits", "defaults", "durations_ns"):
        if key not in data:
            raise SchemaError(f"missing required field {key!r}")
    n = data["num_qubits"]
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise SchemaError("'num_qubits' must be a positive integer")
    defaults = data["defaults"]
    if not isinstance(defaults, dict):
        raise SchemaError("'defaults' must be an object")

    per_qubit: list[dict] = [dict(defaults) for _ in range(n)]
    entries = data.get("qubits", [])
    if not isinstance(entries, list):
        raise SchemaError("'qubits' must be a list")
    for pos, entry in enumerate(entries):
        if not isinstance(entry, dict):
            raise SchemaError(f"qubit entry {pos} must be an object")
        idx = entry.get("index", pos)
        if not isinstance(idx, int) or not 0 <= idx < n:
            raise SchemaError(f"qubit entry {pos} has bad index {idx!r}")
        per_qubit[idx].update({k: v for k, v in entry.items() if k != "index"})

    qubits = []
    for i, fields in enumerate(per_qubit):
        for k in _QUBIT_FIELDS:
            if k not in fields:
                raise SchemaError(f"qubit {i}: missing {k!r} and no default")
        t1 = _number(fields["t1_us"], f"qubit {i} t1_us", allow_inf=True) * 1e-6
        t2 = _number(fields["t2_us"], f"qubit {i} t2_us", allow_inf=True) * 1e-6
        qubits.append(
            QubitParams(
                t1,
                t2,
                _number(fields["readout_p01"], f"qubit {i} readout_p01"),
                _number(fields["readout_p10"], f"qubit {i} readout_p10"),
                _number(fields["p1q"], f"qubit {i} p1q"),
            )
        )

    edges = {}
    for e in data.get("edges", []):
        if not isinstance(e, dict) or "pair" not in e or "p2q" not in e:
            raise SchemaError(f"malformed edge entry {e!r}")
        pair = e["pair"]
        if not (isinstance(pair, list) and len(pair) == 2 and all(isinstance(x, int) for x in pair)):
            raise SchemaError(f"edge pair must be two integers, got {pair!r}")
        if not all(0 <= x < n for x in pair) or pair[0] == pair[1]:
            raise ValidationError(f"edge pair {pair} out of range")
        edges[(pair[0], pair[1])] = _number(e["p2q"], f"p2q of {pair}")

    dur = data["durations_ns"]
    if not isinstance(dur, dict):
        raise SchemaError("'durations_ns' must be an object")
    for k in ("gate1q", "gate2q", "measure"):
        if k not in dur:
            raise SchemaError(f"durations_ns is missing {k!r}")
    opts = data.get("options", {})
    if not isinstance(opts, dict):
        raise SchemaError("'options' must be an object")
    default_p2q = defaults.get("p2q")
    return NoiseModel(
        name=str(data["name"]),
        num_qubits=n,
        qubits=tuple(qubits),
        gate1q_time=_number(dur["gate1q"], "gate1q") * 1e-9,
        gate2q_time=_number(dur["gate2q"], "gate2q") * 1e-9,
        measure_time=_number(dur["measure"], "measure") * 1e-9,
        edge_p2q=edges,
        default_p2q=None if default_p2q is None else _number(default_p2q, "default p2q"),
        swap_as_cnots=bool(opts.get("swap_as_cnots", False)),
        idle_relaxation=bool(opts.get("idle_relaxation", False)),
    )


def apply_confusion(probs: np.ndarray, matrices: Sequence[np.ndarray | None]) -> np.ndarray:
    """Apply one confusion matrix per axis of a ``(2,)*k`` probability tensor."""
    out = probs
    for axis, m in enumerate(matrices):
        if m is None:
            continue
        out = np.moveaxis(np.tensordot(out, m, axes=([axis], [0])), -1, axis)
    return out


def readout_apply(dist: Mapping[str, float], model: NoiseModel, measured_qubits: Sequence[int]) -> dict[str, float]:
    """Independent per-qubit readout errors on a bitstring distribution.

    Character ``i`` of each key is the outcome of ``measured_qubits[i]``.
    """
    k = len(measured_qubits)
    probs = np.zeros((2,) * k)
    for bits, p in dist.items():
        if len(bits) != k:
            raise ValueError(f"bitstring {bits!r} does not match {k} measured qubits")
        probs[tuple(int(b) for b in bits)] += p
    out = apply_confusion(probs, [model.readout(q) for q in measured_qubits])
    return {
        "".join(map(str, idx)): float(out[idx])
        for idx in itertools.product((0, 1), repeat=k)
        if out[idx] > 0
    }


@dataclass(frozen=True, eq=False)
class Instruction:
    """One step of a compiled stream.

    kinds: ``unitary`` (matrix), ``channel`` (Kraus set), ``measure`` (qubit
    into ``clbit``), ``reset``, and ``cunitary``: a unitary applied when the
    parity of ``clbits`` is odd.
    """

    kind: str
    qubits: tuple[int, ...]
    matrix: np.ndarray | None = None
    channel: KrausChannel | None = None
    clbits: tuple[int, ...] = ()


@dataclass(frozen=True, eq=False)
class NoisyStream:
    num_qubits: int
    num_clbits: int
    instructions: tuple[Instruction, ...]
    readout: Mapping[int, np.ndarray]  # clbit -> confusion matrix
    measured: Mapping[int, int]  # clbit -> qubit

    @property
    def active_qubits(self) -> tuple[int, ...]:
        return tuple(sorted({q for ins in self.instructions for q in ins.qubits}))


_TWO_QUBIT = ("cx", "cy", "cz", "swap")


def attach_noise(
    c: Circuit,
    m: NoiseModel,
    *,
    swap_as_cnots: bool | None = None,
    idle_relaxation: bool | None = None,
) -> NoisyStream:
    """Compile a circuit into an instruction stream with noise channels.

    Gate, then depolarizing, then thermal relaxation. Classically controlled
    corrections (and their coherent ``feedforward`` replacements) are noised
    like a single-qubit gate on the corrected qubit, whether or not they fire.
    Measurements carry readout confusion on their classical bit; resets are
    ideal.
    """
    if c.num_qubits > m.num_qubits:
        raise ValidationError(f"circuit uses {c.num_qubits} qubits but model {m.name!r} has {m.num_qubits}")
    swap_as_cnots = m.swap_as_cnots if swap_as_cnots is None else swap_as_cnots
    idle = m.idle_relaxation if idle_relaxation is None else idle_relaxation
    active = c.active_qubits
    out: list[Instruction] = []
    relax_cache: dict[tuple[int, float], KrausChannel | None] = {}

    def relax(q: int, duration: float) -> None:
        key = (q, duration)
        if key not in relax_cache:
            p = m.qubits[q]
            ch = thermal_relaxation_channel(p.t1, p.t2, duration)
            relax_cache[key] = None if ch.is_identity() else ch
        ch = relax_cache[key]
        if ch is not None:
            out.append(Instruction("channel", (q,), channel=ch))

    def idle_others(busy: Sequence[int], duration: float) -> None:
        if idle and duration > 0:
            for q in active:
                if q not in busy:
                    relax(q, duration)

    def noise_1q(q: int) -> None:
        p = m.qubits[q].p1q
        if p > 0:
            out.append(Instruction("channel", (q,), channel=depolarizing_channel(p, 1)))
        relax(q, m.gate1q_time)
        idle_others((q,), m.gate1q_time)

    def noise_2q(a: int, b: int) -> None:
        p = m.p2q(a, b)
        if p > 0:
            out.append(Instruction("channel", (a, b), channel=depolarizing_channel(p, 2)))
        relax(a, m.gate2q_time)
        relax(b, m.gate2q_time)
        idle_others((a, b), m.gate2q_time)

    readout: dict[int, np.ndarray] = {}
    measured: dict[int, int] = {}
    for g in c.ops:
        if g.kind == "barrier":
            continue
        if g.kind == "reset":
            out.append(Instruction("reset", g.qubits))
        elif g.kind == "measure":
            q = g.qubits[0]
            if g.basis == "x":
                out.append(Instruction("unitary", (q,), matrix=gate_matrix("h")))
                noise_1q(q)
            out.append(Instruction("measure", (q,), clbits=g.clbits))
            readout[g.clbits[0]] = m.readout(q)
            measured[g.clbits[0]] = q
            idle_others((q,), m.measure_time)
        elif g.kind == "cond":
            out.append(Instruction("cunitary", g.qubits, matrix=gate_matrix(g), clbits=g.clbits))
            noise_1q(g.qubits[0])
        elif g.kind in _TWO_QUBIT and g.tag == "feedforward":
            out.append(Instruction("unitary", g.qubits, matrix=gate_matrix(g)))
            noise_1q(g.qubits[1])
        elif g.kind == "swap" and swap_as_cnots:
            a, b = g.qubits
            for ctrl, tgt in ((a, b), (b, a), (a, b)):
                out.append(Instruction("unitary", (ctrl, tgt), matrix=gate_matrix("cx")))
                noise_2q(ctrl, tgt)
        elif g.kind in _TWO_QUBIT:
            out.append(Instruction("unitary", g.qubits, matrix=gate_matrix(g)))
            noise_2q(*g.qubits)
        else:
            out.append(Instruction("unitary", g.qubits, matrix=gate_matrix(g)))
            noise_1q(g.qubits[0])
    return NoisyStream(c.num_qubits, c.num_clbits, tuple(out), readout, measured)
