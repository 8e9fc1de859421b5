"""Gate-level circuit IR and the macros the protocols are built from."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "CircuitError",
    "UnsupportedPattern",
    "Gate",
    "Circuit",
    "CircuitBuilder",
    "RandomUnitarySpec",
    "BELL_LABELS",
    "haar_random_u3",
    "u3_matrix",
    "gate_matrix",
    "swap_chain",
    "bell_prepare",
    "bell_measure",
    "defer_measurements",
    "dump",
]

ARITY = {
    "u3": 1, "x": 1, "y": 1, "z": 1, "h": 1, "s": 1, "sdg": 1, "id": 1,
    "reset": 1, "measure": 1, "cond": 1,
    "cx": 2, "cy": 2, "cz": 2, "swap": 2,
}
PAULIS = ("x", "y", "z")

# outcome bits (first qubit, second qubit) -> Bell state
BELL_LABELS = {(0, 0): "phi+", (1, 0): "phi-", (0, 1): "psi+", (1, 1): "psi-"}


class CircuitError(ValueError):
    pass


class UnsupportedPattern(CircuitError):
    """A feed-forward pattern the deferred-measurement rewrite cannot handle."""


@dataclass(frozen=True)
class Gate:
    """One instruction.

    ``clbits`` is the written bit for ``measure`` and the parity of bits that
    triggers a ``cond`` gate. ``tag`` marks swaps as ``internal`` (between two
    qubits of the same party) and coherent corrections as ``feedforward``.
    """

    kind: str
    qubits: tuple[int, ...]
    params: tuple[float, ...] = ()
    clbits: tuple[int, ...] = ()
    basis: str = "z"
    pauli: str = ""
    tag: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        object.__setattr__(self, "clbits", tuple(int(c) for c in self.clbits))
        if self.kind == "barrier":
            return
        if self.kind not in ARITY:
            raise CircuitError(f"unknown gate kind {self.kind!r}")
        if len(self.qubits) != ARITY[self.kind]:
            raise CircuitError(f"{self.kind} acts on {ARITY[self.kind]} qubit(s), got {self.qubits}")
        if len(set(self.qubits)) != len(self.qubits):
            raise CircuitError(f"{self.kind} with repeated qubit {self.qubits}")
        if self.kind == "u3" and len(self.params) != 3:
            raise CircuitError("u3 takes three angles")
        if not all(math.isfinite(p) for p in self.params):
            raise CircuitError(f"non-finite angle in {self.kind}")
        if self.kind == "measure":
            if len(self.clbits) != 1:
                raise CircuitError("measure writes exactly one classical bit")
            if self.basis not in ("z", "x"):
                raise CircuitError(f"unknown measurement basis {self.basis!r}")
        if self.kind == "cond":
            if self.pauli not in PAULIS or not self.clbits:
                raise CircuitError("cond needs a Pauli and at least one classical bit")

    def inverse(self) -> "Gate":
        if self.kind == "u3":
            th, ph, la = self.params
            return Gate("u3", self.qubits, (-th, -la, -ph), tag=self.tag)
        if self.kind == "s":
            return Gate("sdg", self.qubits, tag=self.tag)
        if self.kind == "sdg":
            return Gate("s", self.qubits, tag=self.tag)
        if self.kind in ("x", "y", "z", "h", "id", "cx", "cy", "cz", "swap"):
            return self
        raise CircuitError(f"{self.kind} has no inverse")


@dataclass(frozen=True)
class Circuit:
    num_qubits: int
    ops: tuple[Gate, ...]
    num_clbits: int = 0
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "ops", tuple(self.ops))
        written: set[int] = set()
        for g in self.ops:
            for q in g.qubits:
                if not 0 <= q < self.num_qubits:
                    raise CircuitError(f"{g.kind} targets qubit {q} outside 0..{self.num_qubits - 1}")
            for c in g.clbits:
                if not 0 <= c < self.num_clbits:
                    raise CircuitError(f"classical bit {c} outside register of {self.num_clbits}")
            if g.kind == "measure":
                if g.clbits[0] in written:
                    raise CircuitError(f"classical bit {g.clbits[0]} written twice")
                written.add(g.clbits[0])

    @property
    def active_qubits(self) -> tuple[int, ...]:
        return tuple(sorted({q for g in self.ops for q in g.qubits}))

    def count(self, kind: str, tag: str | None = None) -> int:
        return sum(1 for g in self.ops if g.kind == kind and (tag is None or g.tag == tag))

    def has_midcircuit_measurement(self) -> bool:
        seen: set[int] = set()
        for g in self.ops:
            if g.kind == "measure":
                seen.add(g.qubits[0])
            elif g.kind != "barrier" and seen & set(g.qubits):
                return True
            elif g.kind == "cond":
                return True
        return False


class CircuitBuilder:
    """Mutable accumulator that hands out classical bits as measurements are added."""

    def __init__(self, num_qubits: int, metadata: dict | None = None):
        self.num_qubits = num_qubits
        self.ops: list[Gate] = []
        self.num_clbits = 0
        self.metadata = dict(metadata or {})

    def add(self, *gates: Gate | Iterable[Gate]) -> "CircuitBuilder":
        for g in gates:
            if isinstance(g, Gate):
                self.ops.append(g)
            else:
                self.ops.extend(g)
        return self

    def gate(self, kind: str, *qubits: int, params: Sequence[float] = (), tag: str = "") -> "CircuitBuilder":
        self.ops.append(Gate(kind, qubits, tuple(params), tag=tag))
        return self

    def new_clbit(self) -> int:
        self.num_clbits += 1
        return self.num_clbits - 1

    def measure(self, q: int, basis: str = "z") -> int:
        c = self.new_clbit()
        self.ops.append(Gate("measure", (q,), clbits=(c,), basis=basis))
        return c

    def cond(self, pauli: str, target: int, bits: Sequence[int]) -> "CircuitBuilder":
        self.ops.append(Gate("cond", (target,), clbits=tuple(bits), pauli=pauli))
        return self

    def build(self) -> Circuit:
        return Circuit(self.num_qubits, tuple(self.ops), self.num_clbits, dict(self.metadata))


@dataclass(frozen=True)
class RandomUnitarySpec:
    seed: int
    scheme: str = "haar-single-qubit"


def haar_random_u3(spec: RandomUnitarySpec, qubit: int = 0) -> Gate:
    """U3 gate distributed as a Haar-random element of SU(2).

    The polar angle is drawn with density ``sin(theta) / 2`` so the image of
    ``|0>`` is uniform on the Bloch sphere; both phases are uniform.
    """
    if spec.scheme != "haar-single-qubit":
        raise CircuitError(f"unknown random-unitary scheme {spec.scheme!r}")
    rng = np.random.default_rng(spec.seed)
    u, v, w = rng.random(3)
    theta = math.acos(1.0 - 2.0 * u)
    return Gate("u3", (qubit,), (theta, 2 * math.pi * v, 2 * math.pi * w))


def u3_matrix(theta: float, phi: float, lam: float) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array(
        [[c, -np.exp(1j * lam) * s], [np.exp(1j * phi) * s, np.exp(1j * (phi + lam)) * c]],
        dtype=complex,
    )


_SQ2 = 1 / math.sqrt(2)
_FIXED = {
    "id": np.eye(2, dtype=complex),
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
    "h": np.array([[_SQ2, _SQ2], [_SQ2, -_SQ2]], dtype=complex),
    "s": np.array([[1, 0], [0, 1j]], dtype=complex),
    "sdg": np.array([[1, 0], [0, -1j]], dtype=complex),
    "swap": np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex),
}


def _controlled(u: np.ndarray) -> np.ndarray:
    m = np.eye(4, dtype=complex)
    m[2:, 2:] = u
    return m


for _p in PAULIS:
    _FIXED["c" + _p] = _controlled(_FIXED[_p])


def gate_matrix(g: Gate | str) -> np.ndarray:
    """Unitary of a gate; qubit order follows ``g.qubits`` (first = most significant)."""
    kind = g if isinstance(g, str) else g.kind
    if kind == "u3":
        return u3_matrix(*g.params)
    if kind == "cond":
        return _FIXED[g.pauli]
    try:
        return _FIXED[kind]
    except KeyError:
        raise CircuitError(f"{kind} has no unitary matrix") from None


def swap_chain(path: Sequence[int], forward: bool = True, internal: Iterable[tuple[int, int]] = ()) -> list[Gate]:
    """SWAPs carrying the payload from ``path[0]`` to ``path[-1]`` (or back).

    Pairs listed in ``internal`` are tagged so distance accounting can skip
    them.
    """
    if len(path) < 2:
        raise CircuitError("a swap chain needs at least two qubits")
    internal = {frozenset(p) for p in internal}
    pairs = list(zip(path, path[1:]))
    if not forward:
        pairs = [(b, a) for a, b in reversed(pairs)]
    return [Gate("swap", (a, b), tag="internal" if frozenset((a, b)) in internal else "") for a, b in pairs]


def bell_prepare(a: int, b: int, index: int = 0) -> list[Gate]:
    """Prepare Bell state ``index`` on ``(a, b)`` from ``|00>``.

    Index bits follow the measurement labels: ``index = bit_a + 2 * bit_b``,
    so 0 = phi+, 1 = phi-, 2 = psi+, 3 = psi-.
    """
    if index not in range(4):
        raise CircuitError(f"Bell index must be 0..3, got {index}")
    out = []
    if index & 1:
        out.append(Gate("x", (a,)))
    if index & 2:
        out.append(Gate("x", (b,)))
    out += [Gate("h", (a,)), Gate("cx", (a, b))]
    return out


def bell_measure(a: int, b: int, clbits: tuple[int, int] = (0, 1)) -> list[Gate]:
    """CNOT, Hadamard and two computational measurements.

    Outcome ``(bit_a, bit_b)``: 00 phi+, 10 phi-, 01 psi+, 11 psi-.
    """
    if a == b:
        raise CircuitError("Bell measurement needs two distinct qubits")
    return [
        Gate("cx", (a, b)),
        Gate("h", (a,)),
        Gate("measure", (a,), clbits=(clbits[0],)),
        Gate("measure", (b,), clbits=(clbits[1],)),
    ]


def _rotate_hadamard_measurements(ops: Sequence[Gate]) -> list[Gate]:
    out = []
    for g in ops:
        if g.kind == "measure" and g.basis == "x":
            out.append(Gate("h", g.qubits))
            out.append(Gate("measure", g.qubits, clbits=g.clbits))
        else:
            out.append(g)
    return out


def defer_measurements(c: Circuit) -> Circuit:
    """Replace measure-then-correct feed-forward by coherent controlled Paulis.

    Hadamard-basis measurements are first rotated into the computational
    basis. A correction conditioned on the parity of several bits becomes a
    chain of controlled Paulis, one per bit. All measurements move to the end
    of the circuit in their original order, keeping their classical bits.
    """
    if not any(g.kind == "cond" for g in c.ops):
        return c
    for g in c.ops:
        if g.kind == "measure" and g.basis not in ("z", "x"):
            raise UnsupportedPattern(f"cannot defer a measurement in basis {g.basis!r}")
    ops = _rotate_hadamard_measurements(c.ops)

    source: dict[int, tuple[int, int]] = {}  # clbit -> (op index, qubit)
    for i, g in enumerate(ops):
        if g.kind == "measure":
            source[g.clbits[0]] = (i, g.qubits[0])

    body: list[Gate] = []
    tail: list[Gate] = []
    for i, g in enumerate(ops):
        if g.kind == "measure":
            q, bit = g.qubits[0], g.clbits[0]
            fenced = False
            for later in ops[i + 1:]:
                if later.kind == "barrier":
                    fenced = fenced or not later.qubits or q in later.qubits
                elif later.kind == "cond" and bit in later.clbits and fenced:
                    raise UnsupportedPattern("barrier between a measurement and its correction")
                elif q in later.qubits:
                    raise UnsupportedPattern(f"qubit {q} is reused after its measurement")
            tail.append(g)
        elif g.kind == "cond":
            for bit in g.clbits:
                if bit not in source or source[bit][0] > i:
                    raise UnsupportedPattern(f"correction reads bit {bit} before it is measured")
                ctrl = source[bit][1]
                body.append(Gate("c" + g.pauli, (ctrl, g.qubits[0]), tag="feedforward"))
        else:
            body.append(g)
    return Circuit(c.num_qubits, tuple(body + tail), c.num_clbits, dict(c.metadata, exec_mode="deferred"))


def _fmt(g: Gate) -> str:
    if g.kind == "barrier":
        return "barrier " + " ".join(map(str, g.qubits))
    head = g.kind
    if g.params:
        head += "(" + ",".join(f"{p:.12g}" for p in g.params) + ")"
    qs = " ".join(f"q{q}" for q in g.qubits)
    if g.kind == "measure":
        line = f"measure[{g.basis}] {qs} -> c{g.clbits[0]}"
    elif g.kind == "cond":
        line = f"if {'^'.join(f'c{b}' for b in g.clbits)}: {g.pauli} {qs}"
    else:
        line = f"{head} {qs}"
    if g.tag:
        line += f"  # {g.tag}"
    return line


def dump(c: Circuit) -> str:
    """One gate per line, stable formatting suitable for golden files."""
    header = f"qubits {c.num_qubits} clbits {c.num_clbits}"
    return "\n".join([header] + [_fmt(g) for g in c.ops]) + "\n"
