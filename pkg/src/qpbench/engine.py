"""Execution engines for compiled noisy streams.

``evolve_exact`` / ``exact_probabilities`` propagate the full density matrix
(small registers, ground truth). ``sample_trajectories`` unravels every
channel stochastically on batched state vectors and is the shot-based engine.
Both act only on the qubits a stream touches, so a path on a 127-qubit device
costs the same as on a 6-qubit one.

Bitstrings index the classical register: character ``i`` is bit ``i``.
Readout confusion is applied to the reported bits; feed-forward acts on the
projective outcome.
"""

from __future__ import annotations

import itertools
import json
import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .noise import Instruction, NoisyStream, apply_confusion

__all__ = [
    "TooLarge",
    "DEFAULT_DM_CAP",
    "DensityMatrix",
    "ExactState",
    "ShotResult",
    "TrajectoryConfig",
    "FidelityEstimate",
    "evolve_exact",
    "exact_probabilities",
    "sample_trajectories",
    "sample_from_distribution",
    "fidelity_from_counts",
    "success_probability",
    "simulated_width",
]

DEFAULT_DM_CAP = 12
DEFAULT_TRAJECTORY_CAP = 28
CHUNK_SHOTS = 4096


class TooLarge(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """``2**n`` square density matrix; ``qubits[i]`` labels tensor factor ``i`` (most significant first)."""

    data: np.ndarray
    qubits: tuple[int, ...]

    @property
    def num_qubits(self) -> int:
        return len(self.qubits)

    def check(self, tol: float = 1e-10) -> None:
        d = self.data
        if not np.allclose(d, d.conj().T, atol=tol, rtol=0):
            raise AssertionError("density matrix is not Hermitian")
        if abs(np.trace(d) - 1) > tol:
            raise AssertionError(f"trace {np.trace(d).real} != 1")
        if np.linalg.eigvalsh((d + d.conj().T) / 2).min() < -1e-9:
            raise AssertionError("density matrix has a negative eigenvalue")

    def probabilities(self) -> np.ndarray:
        return np.clip(np.diag(self.data).real, 0, None)

    def reduced(self, keep: Sequence[int]) -> "DensityMatrix":
        """Partial trace onto the physical qubits in ``keep`` (in that order)."""
        n = self.num_qubits
        pos = [self.qubits.index(q) for q in keep]
        t = self.data.reshape((2,) * (2 * n))
        drop = [i for i in range(n) if i not in pos]
        letters = "abcdefghijklmnopqrstuvwxyz"
        rows = list(letters[:n])
        cols = list(letters[n:2 * n]) if 2 * n <= 26 else None
        if cols is None:
            raise TooLarge("reduced() supports up to 13 qubits")
        for i in drop:
            cols[i] = rows[i]
        out = "".join(rows[i] for i in pos) + "".join(cols[i] for i in pos)
        r = np.einsum("".join(rows) + "".join(cols) + "->" + out, t)
        k = len(pos)
        return DensityMatrix(r.reshape(2 ** k, 2 ** k), tuple(keep))

    def fidelity(self, psi: np.ndarray) -> float:
        psi = np.asarray(psi, dtype=complex)
        return float(np.real(psi.conj() @ self.data @ psi))


@dataclass(frozen=True)
class ShotResult:
    counts: Mapping[str, int]
    shots: int
    seed: int

    def __post_init__(self) -> None:
        if sum(self.counts.values()) != self.shots:
            raise ValueError("counts do not sum to shots")

    def to_json(self) -> str:
        return json.dumps({"counts": dict(sorted(self.counts.items())), "shots": self.shots, "seed": self.seed})

    @classmethod
    def from_json(cls, text: str) -> "ShotResult":
        d = json.loads(text)
        return cls({k: int(v) for k, v in d["counts"].items()}, int(d["shots"]), int(d["seed"]))

    def frequencies(self) -> dict[str, float]:
        return {k: v / self.shots for k, v in self.counts.items()}


@dataclass(frozen=True)
class TrajectoryConfig:
    shots: int
    seed: int = 0
    max_qubits: int = DEFAULT_TRAJECTORY_CAP
    workers: int = 1

    def __post_init__(self) -> None:
        if self.shots < 1:
            raise ValueError("shots must be >= 1")


@dataclass(frozen=True)
class FidelityEstimate:
    value: float
    std_error: float


def fidelity_from_counts(result: ShotResult, success: Callable[[str], bool]) -> FidelityEstimate:
    """Fraction of successful shots with its binomial standard error."""
    if result.shots < 1:
        raise ValueError("need at least one shot")
    hits = sum(n for bits, n in result.counts.items() if success(bits))
    v = hits / result.shots
    return FidelityEstimate(v, math.sqrt(v * (1 - v) / result.shots))


def success_probability(dist: Mapping[str, float], success: Callable[[str], bool]) -> float:
    return float(sum(p for bits, p in dist.items() if success(bits)))


# ---------------------------------------------------------------- localisation


_SWAP = np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex)


def _localise(stream: NoisyStream) -> tuple[tuple[int, ...], list[Instruction]]:
    """Renumber the stream onto the wires it actually uses.

    A noise-free SWAP only relabels which wire sits on which physical qubit,
    so it is tracked as a permutation instead of being applied, and a reset
    of a wire still in its initial ``|0>`` is dropped. Wires never touched by
    anything else are left out entirely. Entry ``i`` of the returned qubit
    tuple is the physical qubit holding local wire ``i`` at the end.
    """
    wire_at: dict[int, int] = {}  # physical qubit -> wire; wires start on their own index
    touched: set[int] = set()
    kept: list[tuple[Instruction, tuple[int, ...]]] = []
    for ins in stream.instructions:
        ws = tuple(wire_at.get(q, q) for q in ins.qubits)
        if ins.kind == "unitary" and len(ws) == 2 and np.array_equal(ins.matrix, _SWAP):
            a, b = ins.qubits
            wire_at[a], wire_at[b] = ws[1], ws[0]
            continue
        if ins.kind == "reset" and ws[0] not in touched:
            continue
        touched.update(ws)
        kept.append((ins, ws))
    position = {wire_at.get(q, q): q for q in set(wire_at) | touched}
    wires = sorted(touched)
    index = {w: i for i, w in enumerate(wires)}
    local = [Instruction(ins.kind, tuple(index[w] for w in ws), ins.matrix, ins.channel, ins.clbits) for ins, ws in kept]
    return tuple(position[w] for w in wires), local


def simulated_width(stream: NoisyStream) -> int:
    """Number of wires the engines actually carry for ``stream``."""
    return len(_localise(stream)[0])


def _terminal_measurements(ins: Sequence[Instruction]) -> set[int]:
    """Indices of measurements whose qubit and bit are never used again."""
    terminal = set()
    for i, m in enumerate(ins):
        if m.kind != "measure":
            continue
        q, bit = m.qubits[0], m.clbits[0]
        if not any(q in later.qubits or (later.kind == "cunitary" and bit in later.clbits) for later in ins[i + 1:]):
            terminal.add(i)
    return terminal


def _embed(op: np.ndarray, on: Sequence[int], block: Sequence[int]) -> np.ndarray:
    """Lift an operator acting on qubits ``on`` to the ordered ``block``."""
    on, block = list(on), list(block)
    if on == block:
        return op
    m, k = len(block), len(on)
    order = on + [q for q in block if q not in on]
    full = np.kron(op, np.eye(2 ** (m - k)))
    perm = [order.index(q) for q in block]
    t = full.reshape((2,) * (2 * m)).transpose(perm + [m + p for p in perm])
    return t.reshape(2 ** m, 2 ** m)


def _superop(ins: Instruction, block: Sequence[int]) -> np.ndarray:
    # a superoperator is an operator on (row qubits, column qubits)
    if ins.kind == "unitary":
        s = np.kron(ins.matrix, ins.matrix.conj())
    else:
        s = ins.channel.superoperator
    on = [(0, q) for q in ins.qubits] + [(1, q) for q in ins.qubits]
    full = [(0, q) for q in block] + [(1, q) for q in block]
    return _embed(s, on, full)


def _fuse(ins: Sequence[Instruction], terminal: set[int]) -> list[tuple]:
    """Merge runs of gates and channels into superoperators on at most two qubits."""
    steps: list[tuple] = []
    block: tuple[int, ...] = ()
    mats: list[Instruction] = []

    def flush() -> None:
        nonlocal block, mats
        if mats:
            s = np.eye(4 ** len(block), dtype=complex)
            for m in mats:
                s = _superop(m, block) @ s
            steps.append(("super", block, s))
        block, mats = (), []

    for i, x in enumerate(ins):
        if x.kind in ("unitary", "channel"):
            union = block + tuple(q for q in x.qubits if q not in block)
            if len(union) > 2:
                flush()
                union = tuple(x.qubits)
            block = union
            mats.append(x)
            continue
        flush()
        if x.kind == "measure":
            steps.append(("measure", x.qubits[0], x.clbits[0], i in terminal))
        elif x.kind == "reset":
            steps.append(("reset", x.qubits[0]))
        elif x.kind == "cunitary":
            steps.append(("cunitary", x.qubits, x.matrix, x.clbits))
        else:
            raise ValueError(f"unknown instruction {x.kind!r}")
    flush()
    return steps


# ---------------------------------------------------------------- exact engine


def _apply_super(rho: np.ndarray, s: np.ndarray, qs: Sequence[int], n: int) -> np.ndarray:
    m = len(qs)
    axes = list(qs) + [n + q for q in qs]
    t = np.tensordot(s.reshape((2,) * (4 * m)), rho, axes=(list(range(2 * m, 4 * m)), axes))
    return np.moveaxis(t, list(range(2 * m)), axes)


def _apply_unitary_dm(rho: np.ndarray, u: np.ndarray, qs: Sequence[int], n: int) -> np.ndarray:
    return _apply_super(rho, np.kron(u, u.conj()), qs, n)


def _project(rho: np.ndarray, q: int, v: int, n: int) -> np.ndarray:
    out = np.zeros_like(rho)
    idx = [slice(None)] * (2 * n)
    idx[q] = v
    idx[n + q] = v
    out[tuple(idx)] = rho[tuple(idx)]
    return out


def _reset_dm(rho: np.ndarray, q: int, n: int) -> np.ndarray:
    out = np.zeros_like(rho)
    i0 = [slice(None)] * (2 * n)
    i1 = list(i0)
    i0[q] = i0[n + q] = 0
    i1[q] = i1[n + q] = 1
    out[tuple(i0)] = rho[tuple(i0)] + rho[tuple(i1)]
    return out


def _trace(rho: np.ndarray, n: int) -> float:
    d = 2 ** n
    return float(np.trace(rho.reshape(d, d)).real)


@dataclass(eq=False)
class ExactState:
    """Result of exact evolution.

    ``branches`` maps a record of mid-circuit outcomes ``((clbit, bit), ...)``
    to the unnormalised state of that branch; the branch weights sum to one.
    Terminal measurements are not applied to the states, they are read from
    the diagonal by :func:`exact_probabilities`.
    """

    qubits: tuple[int, ...]
    num_clbits: int
    branches: dict[tuple[tuple[int, int], ...], np.ndarray]
    terminal: list[tuple[int, int]] = field(default_factory=list)  # (clbit, local qubit)
    readout: Mapping[int, np.ndarray] = field(default_factory=dict)

    def density_matrix(self) -> DensityMatrix:
        n = len(self.qubits)
        d = 2 ** n
        total = sum(self.branches.values())
        return DensityMatrix(np.asarray(total).reshape(d, d), self.qubits)


def evolve_exact(stream: NoisyStream, cap: int = DEFAULT_DM_CAP, check: bool = False) -> ExactState:
    qubits, ins = _localise(stream)
    n = len(qubits)
    if n > cap:
        raise TooLarge(f"{n} active qubits exceed the density-matrix cap of {cap}")
    terminal_idx = _terminal_measurements(ins)
    steps = _fuse(ins, terminal_idx)
    rho = np.zeros((2,) * (2 * n), dtype=complex)
    rho[(0,) * (2 * n)] = 1.0
    branches: dict[tuple, np.ndarray] = {(): rho}
    terminal: list[tuple[int, int]] = []

    for step in steps:
        kind = step[0]
        if kind == "super":
            _, qs, s = step
            branches = {k: _apply_super(r, s, qs, n) for k, r in branches.items()}
        elif kind == "measure":
            _, q, bit, is_terminal = step
            if is_terminal:
                terminal.append((bit, q))
                continue
            nxt = {}
            for k, r in branches.items():
                for v in (0, 1):
                    pr = _project(r, q, v, n)
                    if _trace(pr, n) > 1e-15:
                        nxt[k + ((bit, v),)] = pr
            branches = nxt
        elif kind == "reset":
            branches = {k: _reset_dm(r, step[1], n) for k, r in branches.items()}
        elif kind == "cunitary":
            _, qs, u, bits = step
            nxt = {}
            for k, r in branches.items():
                rec = dict(k)
                if sum(rec.get(b, 0) for b in bits) % 2:
                    r = _apply_unitary_dm(r, u, qs, n)
                nxt[k] = r
            branches = nxt
        if check:
            d = 2 ** n
            DensityMatrix(sum(branches.values()).reshape(d, d), qubits).check()
    return ExactState(qubits, stream.num_clbits, branches, terminal, dict(stream.readout))


def _bitstrings(k: int) -> list[str]:
    return ["".join(b) for b in itertools.product("01", repeat=k)]


def exact_probabilities(
    stream: NoisyStream,
    clbits: Sequence[int] | None = None,
    cap: int = DEFAULT_DM_CAP,
    state: ExactState | None = None,
) -> dict[str, float]:
    """Exact distribution of the classical register, readout errors included.

    ``clbits`` marginalises onto a subset (in that order).
    """
    st = state if state is not None else evolve_exact(stream, cap)
    n = len(st.qubits)
    nc = st.num_clbits
    dist = np.zeros((2,) * nc) if nc else np.zeros(())
    d = 2 ** n
    for rec, r in st.branches.items():
        diag = np.clip(np.diag(r.reshape(d, d)).real, 0, None).reshape((2,) * n)
        # marginal over the terminally measured qubits, in terminal order
        tq = [q for _, q in st.terminal]
        uniq = list(dict.fromkeys(tq))
        other = tuple(i for i in range(n) if i not in uniq)
        marg = diag.sum(axis=other) if other else diag
        marg = np.moveaxis(marg, [sorted(uniq).index(q) for q in uniq], list(range(len(uniq)))) if uniq else marg
        fixed = dict(rec)
        for idx in itertools.product((0, 1), repeat=len(uniq)):
            p = float(marg[idx]) if uniq else float(marg)
            if p == 0:
                continue
            bits = [0] * nc
            for b, v in fixed.items():
                bits[b] = v
            val = dict(zip(uniq, idx))
            for b, q in st.terminal:
                bits[b] = val[q]
            dist[tuple(bits)] += p
    dist = apply_confusion(dist, [st.readout.get(b) for b in range(nc)])
    if clbits is not None:
        other = tuple(b for b in range(nc) if b not in clbits)
        dist = dist.sum(axis=other) if other else dist
        order = sorted(clbits)
        dist = np.moveaxis(dist, [order.index(b) for b in clbits], list(range(len(clbits))))
        nc = len(clbits)
    flat = dist.reshape(-1)
    return {s: float(p) for s, p in zip(_bitstrings(nc), flat) if p > 0}


def sample_from_distribution(dist: Mapping[str, float], shots: int, seed: int) -> ShotResult:
    """Multinomial shots drawn from an exact distribution."""
    keys = sorted(dist)
    p = np.array([max(dist[k], 0.0) for k in keys])
    p = p / p.sum()
    rng = np.random.default_rng(seed)
    draws = rng.multinomial(shots, p)
    return ShotResult({k: int(c) for k, c in zip(keys, draws) if c}, shots, seed)


# ---------------------------------------------------------------- trajectories


# The batch of state vectors is a contiguous (shots, 2**n) array; qubit 0 is
# the most significant bit. Operators act through reshaped views.


def _split1(psi: np.ndarray, n: int, q: int) -> np.ndarray:
    return psi.reshape(psi.shape[0], 1 << q, 2, 1 << (n - q - 1))


def _front2(psi: np.ndarray, n: int, qs: Sequence[int]):
    """(shots, 4, rest) copy with ``qs`` in front, plus the map back to flat layout."""
    axes = [1 + q for q in qs]
    shots = psi.shape[0]
    t = np.moveaxis(psi.reshape((shots,) + (2,) * n), axes, [1, 2])
    shape = t.shape

    def restore(m: np.ndarray) -> np.ndarray:
        return np.moveaxis(m.reshape(shape), [1, 2], axes).reshape(shots, -1)

    return t.reshape(shots, 4, -1), restore


def _apply(psi: np.ndarray, n: int, u: np.ndarray, qs: Sequence[int]) -> np.ndarray:
    """Apply one operator (``u`` is d x d) or one per shot (``u`` is shots x d x d)."""
    if u.ndim == 3:
        u = u[:, None] if len(qs) == 1 else u
    if len(qs) == 1:
        return (u @ _split1(psi, n, qs[0])).reshape(psi.shape)
    t, restore = _front2(psi, n, qs)
    return restore(u @ t)


def _branch_probabilities(psi: np.ndarray, n: int, effects: np.ndarray, qs: Sequence[int]) -> np.ndarray:
    """``<psi|E_k|psi>`` for every shot and effect, shape (shots, k)."""
    if len(qs) == 1:
        v = _split1(psi, n, qs[0])
        x0, x1 = v[:, :, 0, :], v[:, :, 1, :]
        a0 = np.sum(np.abs(x0) ** 2, axis=(1, 2))
        a1 = np.sum(np.abs(x1) ** 2, axis=(1, 2))
        c = np.sum(x0.conj() * x1, axis=(1, 2))
        e = effects
        return (np.outer(a0, e[:, 0, 0].real) + np.outer(a1, e[:, 1, 1].real)
                + 2 * np.real(np.outer(c, e[:, 0, 1])))
    t, _ = _front2(psi, n, qs)
    rho = t @ t.conj().swapaxes(1, 2)
    return np.einsum("kij,sji->sk", effects, rho).real


def _apply_choices(psi: np.ndarray, n: int, ops: np.ndarray, choice: np.ndarray, qs: Sequence[int]) -> np.ndarray:
    """Apply ``ops[choice[s]]`` to shot ``s``; the most common branch goes in one batch."""
    common = np.bincount(choice, minlength=len(ops)).argmax()
    rare = choice != common
    out = psi if _is_scalar(ops[common]) and abs(ops[common][0, 0] - 1) < 1e-15 else _apply(psi, n, ops[common], qs)
    if rare.any():
        out = out.copy() if out is psi else out
        out[rare] = _apply(psi[rare], n, ops[choice[rare]], qs)
    return out


def _is_scalar(m: np.ndarray) -> bool:
    return bool(np.allclose(m, m[0, 0] * np.eye(len(m))))


_X = np.array([[0, 1], [1, 0]], dtype=complex)


def _run_chunk(ins: Sequence[Instruction], n: int, nc: int, shots: int, rng: np.random.Generator) -> np.ndarray:
    psi = np.zeros((shots, 1 << n), dtype=complex)
    psi[:, 0] = 1.0
    rec = np.zeros((shots, max(nc, 1)), dtype=np.int8)
    rows = np.arange(shots)
    for x in ins:
        if x.kind == "unitary":
            psi = _apply(psi, n, x.matrix, x.qubits)
        elif x.kind == "channel":
            ch = x.channel
            w = ch.mixed_unitary_weights
            if w is not None:
                # branch choice does not depend on the state
                choice = rng.choice(len(w), size=shots, p=w / w.sum())
                psi = _apply_choices(psi, n, ch.unitary_stack, choice, x.qubits)
            else:
                probs = np.maximum(_branch_probabilities(psi, n, ch.effects, x.qubits), 0)
                cum = np.cumsum(probs, axis=1)
                u = rng.random(shots) * cum[:, -1]
                choice = np.minimum((cum < u[:, None]).sum(axis=1), probs.shape[1] - 1)
                psi = _apply_choices(psi, n, ch.kraus_stack, choice, x.qubits)
                psi /= np.sqrt(probs[rows, choice])[:, None]
        elif x.kind in ("measure", "reset"):
            q = x.qubits[0]
            v = _split1(psi, n, q)
            p1 = np.sum(np.abs(v[:, :, 1, :]) ** 2, axis=(1, 2))
            outcome = (rng.random(shots) < p1).astype(np.int8)
            v[:, :, 0, :] *= (outcome == 0)[:, None, None]
            v[:, :, 1, :] *= (outcome == 1)[:, None, None]
            kept = np.where(outcome == 1, p1, 1 - p1)
            psi /= np.sqrt(kept)[:, None]
            if x.kind == "measure":
                rec[:, x.clbits[0]] = outcome
            elif outcome.any():
                flip = outcome == 1
                psi[flip] = _apply(psi[flip], n, _X, (q,))
        elif x.kind == "cunitary":
            mask = rec[:, list(x.clbits)].sum(axis=1) % 2 == 1
            if mask.any():
                psi[mask] = _apply(psi[mask], n, x.matrix, x.qubits)
        else:
            raise ValueError(f"unknown instruction {x.kind!r}")
    return rec


def _chunk_counts(
    ins: Sequence[Instruction],
    n: int,
    stream: NoisyStream,
    seed: int,
    chunk: int,
    shots: int,
) -> Counter:
    rng = np.random.default_rng(np.random.SeedSequence([seed, chunk]))
    nc = stream.num_clbits
    rec = _run_chunk(ins, n, nc, shots, rng)
    for bit in range(nc):
        m = stream.readout.get(bit)
        if m is None:
            continue
        p_flip = np.where(rec[:, bit] == 0, m[0, 1], m[1, 0])
        flip = rng.random(shots) < p_flip
        rec[flip, bit] ^= 1
    if nc == 0:
        return Counter({"": shots})
    weights = 1 << np.arange(nc - 1, -1, -1)
    codes = rec[:, :nc].astype(np.int64) @ weights
    vals, cnt = np.unique(codes, return_counts=True)
    return Counter({format(int(v), f"0{nc}b"): int(c) for v, c in zip(vals, cnt)})


def sample_trajectories(stream: NoisyStream, cfg: TrajectoryConfig) -> ShotResult:
    """Monte Carlo unravelling of the stream, one state vector per shot.

    Shots are processed in fixed-size chunks, each seeded from
    ``(seed, chunk index)``, so counts depend only on the stream, the shot
    count and the seed, never on ``cfg.workers``.
    """
    qubits, ins = _localise(stream)
    n = len(qubits)
    if n > cfg.max_qubits:
        raise TooLarge(f"{n} active qubits exceed the trajectory cap of {cfg.max_qubits}")
    size = max(1, min(CHUNK_SHOTS, (1 << 22) >> n))
    sizes = [min(size, cfg.shots - start) for start in range(0, cfg.shots, size)]
    jobs = [(i, s) for i, s in enumerate(sizes)]

    def work(job):
        return _chunk_counts(ins, n, stream, cfg.seed, *job)

    if cfg.workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            parts = list(pool.map(work, jobs))
    else:
        parts = [work(j) for j in jobs]
    total: Counter = Counter()
    for p in parts:
        total.update(p)
    return ShotResult(dict(sorted(total.items())), cfg.shots, cfg.seed)
