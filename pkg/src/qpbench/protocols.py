"""The seven two-party protocols, their success predicates and thresholds.

Every builder takes a :class:`~qpbench.topology.Placement` and returns a
:class:`~qpbench.circuit.Circuit` on the device's physical qubits. Work
qubits are tracked through the swap network, so measurements always land on
wherever a qubit currently sits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from .circuit import (
    Circuit,
    CircuitBuilder,
    Gate,
    RandomUnitarySpec,
    bell_measure,
    bell_prepare,
    defer_measurements,
    haar_random_u3,
)
from .engine import DensityMatrix
from .topology import Placement

__all__ = [
    "ProtocolError",
    "PlacementMismatch",
    "BadParams",
    "ProtocolKind",
    "ProtocolSpec",
    "SINGLE_QUBIT_THRESHOLD",
    "BELL_THRESHOLD",
    "BASIC_KINDS",
    "THRESHOLD_VECTOR",
    "REFERENCE_FIDELITIES",
    "is_quantum",
    "build_do_nothing",
    "build_superdense",
    "build_bell_transfer",
    "build_teleportation",
    "build_entanglement_swapping",
    "build_generalized_do_nothing",
    "build_cat_state",
    "build_circuits",
    "success_predicate",
    "per_qubit_predicates",
    "bell_state_vector",
    "classical_baseline_single_qubit",
    "classical_baseline_bell",
]

SINGLE_QUBIT_THRESHOLD = 2 / 3
BELL_THRESHOLD = 1 / 2


class ProtocolError(ValueError):
    pass


class PlacementMismatch(ProtocolError):
    pass


class BadParams(ProtocolError):
    pass


class ProtocolKind(str, Enum):
    DO_NOTHING = "do-nothing"
    SUPERDENSE = "superdense"
    BELL_TRANSFER = "bell-transfer"
    TELEPORTATION = "teleportation"
    ENT_SWAP = "ent-swap"
    GEN_DO_NOTHING = "gen-do-nothing"
    CAT_STATE = "cat-state"


BASIC_KINDS = (
    ProtocolKind.DO_NOTHING,
    ProtocolKind.SUPERDENSE,
    ProtocolKind.BELL_TRANSFER,
    ProtocolKind.TELEPORTATION,
    ProtocolKind.ENT_SWAP,
)
THRESHOLD_VECTOR = (2 / 3, 1 / 2, 1 / 2, 2 / 3, 1 / 2)

# Fidelities reported for the vendor's simulated 27-qubit Falcon device on the
# 6-qubit line, plus the 15-qubit device vector. They depend on calibration
# data that is not public and serve as documentation, not as test targets.
REFERENCE_FIDELITIES = {
    "do-nothing L=5": 0.882,
    "superdense L=4": 0.809,
    "bell-transfer L=3": 0.804,
    "teleportation L=3 (1000 / 10000 shots)": (0.923, 0.919),
    "ent-swap L=1": 0.826,
    "gen-do-nothing M=3 L=1 per qubit": (0.753, 0.687, 0.704),
    "cat-state M=4 J=2 L=1": 0.846,
    "cat-state M=4 J=2 L=6": 0.53,
    "cat-state M=4 J=3 L=6": 0.47,
    "15-qubit device vector": (0.5373, 0.3303, 0.3261, 0.5059, 0.3543),
}

_SIZES = {
    ProtocolKind.DO_NOTHING: (1, 1),
    ProtocolKind.SUPERDENSE: (2, 1),
    ProtocolKind.BELL_TRANSFER: (2, 2),
    ProtocolKind.TELEPORTATION: (3, 1),
    ProtocolKind.ENT_SWAP: (4, 2),
}


def is_quantum(value: float, threshold: float) -> bool:
    """Strictly above the classical bound counts as quantum."""
    return value > threshold


@dataclass(frozen=True)
class ProtocolSpec:
    """A protocol together with its parameters.

    ``message`` only applies to superdense coding; ``None`` runs all four
    messages and pools them.
    """

    kind: ProtocolKind
    M: int | None = None
    J: int | None = None
    bell_index: int = 0
    ancilla_mode: str = "zero"
    exec_mode: str = "deferred"
    message: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", ProtocolKind(self.kind))
        k = self.kind
        if k is ProtocolKind.GEN_DO_NOTHING:
            if self.M is None or self.M < 1:
                raise BadParams("gen-do-nothing needs M >= 1")
        elif k is ProtocolKind.CAT_STATE:
            if self.M is None or self.J is None:
                raise BadParams("cat-state needs M and J")
            if self.J < 2 or self.M < self.J:
                raise BadParams(f"cat-state needs M >= J >= 2, got M={self.M}, J={self.J}")
        if self.bell_index not in range(4):
            raise BadParams("bell index must be 0..3")
        if self.ancilla_mode not in ("zero", "random"):
            raise BadParams(f"unknown ancilla mode {self.ancilla_mode!r}")
        if self.ancilla_mode == "random" and k is not ProtocolKind.DO_NOTHING:
            raise BadParams("random ancillas are only defined for do-nothing")
        if self.exec_mode not in ("deferred", "midcircuit"):
            raise BadParams(f"unknown execution mode {self.exec_mode!r}")
        if self.message is not None and self.message not in ("00", "01", "10", "11"):
            raise BadParams(f"superdense message must be two bits, got {self.message!r}")

    @property
    def node_sizes(self) -> tuple[int, int]:
        if self.kind is ProtocolKind.GEN_DO_NOTHING:
            return (self.M, self.M)
        if self.kind is ProtocolKind.CAT_STATE:
            return (self.M, self.J)
        return _SIZES[self.kind]

    @property
    def min_qubits(self) -> int:
        return sum(self.node_sizes)

    @property
    def threshold(self) -> float:
        if self.kind in (ProtocolKind.DO_NOTHING, ProtocolKind.TELEPORTATION, ProtocolKind.GEN_DO_NOTHING):
            return SINGLE_QUBIT_THRESHOLD
        return BELL_THRESHOLD

    @property
    def transfers(self) -> list[tuple[int, int]]:
        """``(alice index, bob index)`` of every sent qubit, in sending order."""
        k = self.kind
        if k is ProtocolKind.DO_NOTHING:
            return [(0, 0)]
        if k is ProtocolKind.SUPERDENSE:
            return [(1, 0)]
        if k is ProtocolKind.BELL_TRANSFER:
            return [(1, 1), (0, 0)]
        if k is ProtocolKind.TELEPORTATION:
            return [(2, 0)]
        if k is ProtocolKind.ENT_SWAP:
            return [(3, 1), (1, 0)]
        if k is ProtocolKind.GEN_DO_NOTHING:
            return [(i, i) for i in reversed(range(self.M))]
        return [(self.M - self.J + j, j) for j in reversed(range(self.J))]

    @property
    def round_trip(self) -> bool:
        return self.kind in (ProtocolKind.DO_NOTHING, ProtocolKind.SUPERDENSE, ProtocolKind.GEN_DO_NOTHING)

    @property
    def label(self) -> str:
        if self.kind is ProtocolKind.GEN_DO_NOTHING:
            return f"{self.kind.value}{{{self.M}}}"
        if self.kind is ProtocolKind.CAT_STATE:
            return f"{self.kind.value}{{{self.M};{self.J}}}"
        return self.kind.value

    def params(self) -> dict:
        d = {"bell_index": self.bell_index, "ancilla_mode": self.ancilla_mode, "exec_mode": self.exec_mode}
        if self.M is not None:
            d["M"] = self.M
        if self.J is not None:
            d["J"] = self.J
        if self.message is not None:
            d["message"] = self.message
        return d


# ------------------------------------------------------------------ plumbing


class _Router:
    """Tracks where each logical qubit sits while swaps are emitted."""

    def __init__(self, spec: ProtocolSpec, p: Placement, b: CircuitBuilder):
        n_a, n_b = spec.node_sizes
        if (len(p.alice), len(p.bob)) != (n_a, n_b):
            raise PlacementMismatch(
                f"{spec.label} needs [{n_a};{n_b}] blocks, placement has [{len(p.alice)};{len(p.bob)}]"
            )
        transfers = spec.transfers
        if not p.is_single_path and len(p.transfer_paths) != len(transfers):
            raise PlacementMismatch(
                f"{spec.label} sends {len(transfers)} qubit(s) but placement has {len(p.transfer_paths)} paths"
            )
        self.p, self.b, self.transfers = p, b, transfers
        self.where = {i: q for i, q in enumerate(p.alice)}  # logical work index -> physical
        self.occupant = {q: i for i, q in self.where.items()}
        self.alice, self.bob = set(p.alice), set(p.bob)
        self.swaps: list[Gate] = []

    def _swap(self, a: int, c: int) -> None:
        internal = {a, c} <= self.alice or {a, c} <= self.bob
        g = Gate("swap", (a, c), tag="internal" if internal else "")
        self.b.add(g)
        self.swaps.append(g)
        la, lc = self.occupant.pop(a, None), self.occupant.pop(c, None)
        if la is not None:
            self.where[la] = c
            self.occupant[c] = la
        if lc is not None:
            self.where[lc] = a
            self.occupant[a] = lc

    def send(self) -> None:
        p = self.p
        for j, (ia, ib) in enumerate(self.transfers):
            src = self.where[ia]
            if p.is_single_path:
                line = p.line
                dst = p.bob[ib]
                i0, i1 = line.index(src), line.index(dst)
                chain = line[i0:i1 + 1]
            else:
                chain = p.transfer_paths[j]
                if chain[0] != src or chain[-1] != p.bob[ib]:
                    raise PlacementMismatch(f"path {chain} does not join {src} to {p.bob[ib]}")
            for a, c in zip(chain, chain[1:]):
                self._swap(a, c)

    def send_back(self) -> None:
        for g in reversed(list(self.swaps)):
            self._swap(*g.qubits)
        self.swaps = self.swaps[: len(self.swaps) // 2]

    def __getitem__(self, logical: int) -> int:
        return self.where[logical]


def _width(p: Placement, num_qubits: int | None) -> int:
    need = max(p.qubits) + 1
    if num_qubits is None:
        return need
    if num_qubits < need:
        raise PlacementMismatch(f"placement uses qubit {need - 1} beyond a {num_qubits}-qubit device")
    return num_qubits


def _builder(spec: ProtocolSpec, p: Placement, num_qubits: int | None) -> CircuitBuilder:
    b = CircuitBuilder(
        _width(p, num_qubits),
        {
            "protocol": spec.kind.value,
            "label": spec.label,
            "params": spec.params(),
            "placement": p.to_dict(),
            "distance": p.distance,
            "exec_mode": spec.exec_mode,
        },
    )
    order = p.line if p.is_single_path else p.qubits
    for q in order:
        b.gate("reset", q)
    return b


def _finish(spec: ProtocolSpec, b: CircuitBuilder) -> Circuit:
    c = b.build()
    if spec.exec_mode == "deferred":
        c = defer_measurements(c)
    return c


def _seeds(seed: int, k: int) -> list[int]:
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(k, dtype=np.uint64)]


def _random_gate(seed: int, q: int) -> Gate:
    return haar_random_u3(RandomUnitarySpec(seed), q)


# ------------------------------------------------------------------ builders


def _do_nothing_family(
    spec: ProtocolSpec,
    p: Placement,
    work_seeds: Sequence[int],
    ancilla_seeds: Sequence[int] | None,
    num_qubits: int | None,
) -> Circuit:
    m = len(work_seeds)
    b = _builder(spec, p, num_qubits)
    r = _Router(spec, p, b)
    ancillas = p.ancillas
    anc_gates = {}
    if spec.ancilla_mode == "random":
        if ancilla_seeds is None or len(ancilla_seeds) < len(ancillas):
            raise BadParams("random ancilla mode needs one seed per ancilla")
        for q, s in zip(ancillas, ancilla_seeds):
            anc_gates[q] = _random_gate(s, q)
            b.add(anc_gates[q])

    # random(0) on w0, cnot(w0 -> w1), random(1) on w1, ...
    init: list[tuple[str, tuple[int, ...], Gate | None]] = []
    for i, s in enumerate(work_seeds):
        if i:
            init.append(("cx", (i - 1, i), None))
        init.append(("u", (i,), _random_gate(s, 0)))

    def emit(steps, invert: bool) -> None:
        for kind, logical, g in (reversed(steps) if invert else steps):
            qs = tuple(r[i] for i in logical)
            if kind == "cx":
                b.gate("cx", *qs)
            else:
                u = g.inverse() if invert else g
                b.add(Gate("u3", qs, u.params))

    emit(init, invert=False)
    r.send()
    emit(init, invert=True)
    r.send_back()
    per_qubit = []
    for i in range(m):
        per_qubit.append([f"w{i}", b.measure(r[i])])
    for q in ancillas if spec.ancilla_mode == "random" else ():
        b.add(anc_gates[q].inverse())
        per_qubit.append([f"q{q}", b.measure(q)])
    b.metadata["success"] = {"type": "zeros", "clbits": [c for _, c in per_qubit]}
    b.metadata["per_qubit"] = per_qubit
    b.metadata["score"] = "joint" if len(per_qubit) == 1 else "worst_qubit"
    return _finish(spec, b)


def build_do_nothing(
    p: Placement,
    u: RandomUnitarySpec,
    ancilla_mode: str = "zero",
    ancilla_seeds: Sequence[int] | None = None,
    num_qubits: int | None = None,
) -> Circuit:
    """Send a random qubit to Bob, undo its preparation there and bring it back.

    In ``random`` ancilla mode every ancilla is scrambled first and unscrambled
    before being measured; each measured qubit then gets its own fidelity.
    """
    spec = ProtocolSpec(ProtocolKind.DO_NOTHING, ancilla_mode=ancilla_mode)
    return _do_nothing_family(spec, p, [u.seed], ancilla_seeds, num_qubits)


def build_generalized_do_nothing(
    p: Placement, M: int, seeds: Sequence[int], num_qubits: int | None = None
) -> Circuit:
    """Do-nothing on an entangled block of ``M`` work qubits."""
    if len(seeds) != M:
        raise BadParams(f"need {M} seeds, got {len(seeds)}")
    spec = ProtocolSpec(ProtocolKind.GEN_DO_NOTHING, M=M)
    return _do_nothing_family(spec, p, list(seeds), None, num_qubits)


def build_superdense(p: Placement, message: str = "10", num_qubits: int | None = None) -> Circuit:
    """Bob encodes two bits on his half of a Bell pair and returns it."""
    spec = ProtocolSpec(ProtocolKind.SUPERDENSE, message=message)
    b = _builder(spec, p, num_qubits)
    r = _Router(spec, p, b)
    b.add(bell_prepare(r[0], r[1], 0))
    r.send()
    c0, c1 = int(message[0]), int(message[1])
    # always two gate slots so every message sees the same noise
    b.gate("x" if c1 else "id", r[1])
    b.gate("z" if c0 else "id", r[1])
    r.send_back()
    bits = (b.new_clbit(), b.new_clbit())
    b.add(bell_measure(r[0], r[1], bits))
    b.metadata["success"] = {"type": "equals", "clbits": list(bits), "value": [c0, c1]}
    return _finish(spec, b)


def build_bell_transfer(p: Placement, bell_index: int = 0, num_qubits: int | None = None) -> Circuit:
    """Move both halves of a Bell pair to Bob, who identifies the state."""
    spec = ProtocolSpec(ProtocolKind.BELL_TRANSFER, bell_index=bell_index)
    b = _builder(spec, p, num_qubits)
    r = _Router(spec, p, b)
    b.add(bell_prepare(r[0], r[1], bell_index))
    r.send()
    bits = (b.new_clbit(), b.new_clbit())
    b.add(bell_measure(r[0], r[1], bits))
    b.metadata["success"] = {"type": "equals", "clbits": list(bits), "value": [bell_index & 1, bell_index >> 1]}
    return _finish(spec, b)


def build_teleportation(
    p: Placement, u: RandomUnitarySpec, mode: str = "deferred", num_qubits: int | None = None
) -> Circuit:
    """Teleport a random state over a Bell pair whose half was sent to Bob."""
    spec = ProtocolSpec(ProtocolKind.TELEPORTATION, exec_mode=mode)
    b = _builder(spec, p, num_qubits)
    r = _Router(spec, p, b)
    b.add(bell_prepare(r[1], r[2], 0))
    r.send()
    g = _random_gate(u.seed, r[0])
    b.add(g)
    m0, m1 = b.new_clbit(), b.new_clbit()
    b.add(bell_measure(r[0], r[1], (m0, m1)))
    target = r[2]
    b.cond("x", target, [m1])
    b.cond("z", target, [m0])
    b.add(Gate("u3", (target,), g.inverse().params))
    out = b.measure(target)
    b.metadata["success"] = {"type": "zeros", "clbits": [out]}
    return _finish(spec, b)


def build_entanglement_swapping(p: Placement, num_qubits: int | None = None) -> Circuit:
    """Two Bell pairs; one half of each goes to Bob and both sides Bell-measure.

    Bits 0-1 are Alice's outcome, bits 2-3 Bob's; success means they match.
    """
    spec = ProtocolSpec(ProtocolKind.ENT_SWAP)
    b = _builder(spec, p, num_qubits)
    r = _Router(spec, p, b)
    b.add(bell_prepare(r[0], r[1], 0))
    b.add(bell_prepare(r[2], r[3], 0))
    r.send()
    a_bits = (b.new_clbit(), b.new_clbit())
    b.add(bell_measure(r[0], r[2], a_bits))
    b_bits = (b.new_clbit(), b.new_clbit())
    b.add(bell_measure(r[1], r[3], b_bits))
    b.metadata["success"] = {"type": "match", "left": list(a_bits), "right": list(b_bits)}
    return _finish(spec, b)


def build_cat_state(
    p: Placement, M: int, J: int, mode: str = "deferred", num_qubits: int | None = None
) -> Circuit:
    """Share an M-qubit cat state, send J qubits and distil a Bell pair at Bob.

    Leftover qubits on both sides are measured in the Hadamard basis and Bob
    flips the phase of his pair when the number of minus outcomes is odd.
    """
    spec = ProtocolSpec(ProtocolKind.CAT_STATE, M=M, J=J, exec_mode=mode)
    b = _builder(spec, p, num_qubits)
    r = _Router(spec, p, b)
    b.gate("h", r[0])
    for i in range(M - 1):
        b.gate("cx", r[i], r[i + 1])
    r.send()
    parity = [b.measure(r[i], basis="x") for i in range(M - J)]
    parity += [b.measure(r[i], basis="x") for i in range(M - J, M - 2)]
    pair = (r[M - 2], r[M - 1])
    if parity:
        b.cond("z", pair[0], parity)
    bits = (b.new_clbit(), b.new_clbit())
    b.add(bell_measure(*pair, bits))
    b.metadata["success"] = {"type": "equals", "clbits": list(bits), "value": [0, 0]}
    return _finish(spec, b)


def build_circuits(spec: ProtocolSpec, p: Placement, seed: int, num_qubits: int | None = None) -> list[Circuit]:
    """Every circuit one benchmark run of ``spec`` needs on placement ``p``.

    Random unitaries are derived from ``seed``. Superdense coding without a
    fixed message yields four circuits, one per message.
    """
    k = spec.kind
    if k is ProtocolKind.DO_NOTHING:
        s = _seeds(seed, 1 + len(p.ancillas))
        return [_do_nothing_family(spec, p, s[:1], s[1:], num_qubits)]
    if k is ProtocolKind.GEN_DO_NOTHING:
        return [_do_nothing_family(spec, p, _seeds(seed, spec.M), None, num_qubits)]
    if k is ProtocolKind.SUPERDENSE:
        msgs = [spec.message] if spec.message else ["00", "01", "10", "11"]
        return [build_superdense(p, m, num_qubits) for m in msgs]
    if k is ProtocolKind.BELL_TRANSFER:
        return [build_bell_transfer(p, spec.bell_index, num_qubits)]
    if k is ProtocolKind.TELEPORTATION:
        return [build_teleportation(p, RandomUnitarySpec(_seeds(seed, 1)[0]), spec.exec_mode, num_qubits)]
    if k is ProtocolKind.ENT_SWAP:
        return [build_entanglement_swapping(p, num_qubits)]
    return [build_cat_state(p, spec.M, spec.J, spec.exec_mode, num_qubits)]


# ------------------------------------------------------------------ predicates


def _bits_predicate(clbits: Sequence[int], value: Sequence[int]) -> Callable[[str], bool]:
    want = [str(v) for v in value]
    return lambda s: all(s[c] == w for c, w in zip(clbits, want))


def success_predicate(c: Circuit) -> Callable[[str], bool]:
    """Joint success test on a bitstring of the circuit's classical register."""
    spec = c.metadata["success"]
    t = spec["type"]
    if t == "zeros":
        return _bits_predicate(spec["clbits"], [0] * len(spec["clbits"]))
    if t == "equals":
        return _bits_predicate(spec["clbits"], spec["value"])
    if t == "match":
        left, right = spec["left"], spec["right"]
        return lambda s: all(s[a] == s[b] for a, b in zip(left, right))
    raise ProtocolError(f"unknown success type {t!r}")


def per_qubit_predicates(c: Circuit) -> dict[str, Callable[[str], bool]]:
    """One ``bit == 0`` test per individually scored qubit (empty if none)."""
    return {label: _bits_predicate([bit], [0]) for label, bit in c.metadata.get("per_qubit", [])}


# ------------------------------------------------------------------ classical bounds


def bell_state_vector(index: int) -> np.ndarray:
    """Bell state with measurement label ``index = bit_a + 2 * bit_b``."""
    s = 1 / math.sqrt(2)
    return {
        0: np.array([s, 0, 0, s], dtype=complex),
        1: np.array([s, 0, 0, -s], dtype=complex),
        2: np.array([0, s, s, 0], dtype=complex),
        3: np.array([0, s, -s, 0], dtype=complex),
    }[index]


def classical_baseline_single_qubit(samples: int, seed: int = 0, state: np.ndarray | None = None) -> float:
    """Mean fidelity of measure-and-reprepare in the computational basis.

    Inputs are Haar-random pure states unless a fixed ``state`` is given.
    """
    if samples < 1:
        raise BadParams("samples must be >= 1")
    rng = np.random.default_rng(seed)
    if state is None:
        z = rng.normal(size=(samples, 2)) + 1j * rng.normal(size=(samples, 2))
        psi = z / np.linalg.norm(z, axis=1, keepdims=True)
    else:
        st = np.asarray(state, dtype=complex)
        psi = np.tile(st / np.linalg.norm(st), (samples, 1))
    p0 = np.abs(psi[:, 0]) ** 2
    outcome_one = rng.random(samples) >= p0
    # reprepared basis state overlaps the input with the outcome's probability
    fid = np.where(outcome_one, 1 - p0, p0)
    return float(fid.mean())


def classical_baseline_bell(p1: float, p2: float, p3: float, target: int = 0) -> DensityMatrix:
    """Bell-diagonal state: the target Bell state with weight 1/2, the others ``p1, p2, p3``."""
    if min(p1, p2, p3) < 0 or abs(p1 + p2 + p3 - 0.5) > 1e-9:
        raise BadParams("p1 + p2 + p3 must equal 1/2 with non-negative entries")
    others = [i for i in range(4) if i != target]
    rho = 0.5 * np.outer(bell_state_vector(target), bell_state_vector(target).conj())
    for w, i in zip((p1, p2, p3), others):
        v = bell_state_vector(i)
        rho = rho + w * np.outer(v, v.conj())
    return DensityMatrix(rho, (0, 1))
