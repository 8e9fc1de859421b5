from __future__ import annotations

import math

import numpy as np
import pytest

from qpbench.circuit import (
    Circuit,
    CircuitBuilder,
    CircuitError,
    Gate,
    RandomUnitarySpec,
    UnsupportedPattern,
    bell_measure,
    bell_prepare,
    defer_measurements,
    dump,
    gate_matrix,
    haar_random_u3,
    swap_chain,
    u3_matrix,
)


def _statevector(ops, n):
    """Plain dense simulation of unitary gates, qubit 0 most significant."""
    psi = np.zeros(2 ** n, dtype=complex)
    psi[0] = 1
    for g in ops:
        u = gate_matrix(g)
        k = len(g.qubits)
        t = psi.reshape((2,) * n)
        t = np.moveaxis(t, g.qubits, range(k))
        t = (u @ t.reshape(2 ** k, -1)).reshape(t.shape)
        psi = np.moveaxis(t, range(k), g.qubits).reshape(-1)
    return psi


def test_gate_validation():
    with pytest.raises(CircuitError):
        Gate("cx", (1, 1))
    with pytest.raises(CircuitError):
        Gate("u3", (0,), (1.0, 2.0))
    with pytest.raises(CircuitError):
        Gate("frob", (0,))
    with pytest.raises(CircuitError):
        Gate("measure", (0,))
    with pytest.raises(CircuitError):
        Gate("u3", (0,), (math.nan, 0, 0))
    with pytest.raises(CircuitError):
        Circuit(2, (Gate("x", (2,)),))
    with pytest.raises(CircuitError):
        Circuit(1, (Gate("measure", (0,), clbits=(0,)), Gate("measure", (0,), clbits=(0,))), 1)


def test_u3_inverse_is_adjoint():
    for seed in range(20):
        g = haar_random_u3(RandomUnitarySpec(seed))
        u, v = gate_matrix(g), gate_matrix(g.inverse())
        assert np.allclose(v @ u, np.eye(2), atol=1e-12)


def test_haar_sampler_is_seeded_and_uniform_on_sphere():
    a = haar_random_u3(RandomUnitarySpec(5), 3)
    assert a == haar_random_u3(RandomUnitarySpec(5), 3)
    assert a != haar_random_u3(RandomUnitarySpec(6), 3)
    # <z> of U|0> is cos(theta); uniform on [-1, 1] for Haar states
    z = np.array([math.cos(haar_random_u3(RandomUnitarySpec(s)).params[0]) for s in range(4000)])
    assert abs(z.mean()) < 0.05
    assert abs((z ** 2).mean() - 1 / 3) < 0.03
    with pytest.raises(CircuitError):
        haar_random_u3(RandomUnitarySpec(0, "clifford"))


def test_u3_special_values():
    assert np.allclose(u3_matrix(math.pi, 0, math.pi), [[0, 1], [1, 0]])
    assert np.allclose(u3_matrix(math.pi / 2, 0, math.pi), gate_matrix("h"))


def test_swap_chain_directions():
    fwd = swap_chain([0, 1, 2, 3], internal=[(0, 1)])
    assert [g.qubits for g in fwd] == [(0, 1), (1, 2), (2, 3)]
    assert [g.tag for g in fwd] == ["internal", "", ""]
    back = swap_chain([0, 1, 2, 3], forward=False)
    assert [g.qubits for g in back] == [(3, 2), (2, 1), (1, 0)]
    # a round trip is the identity permutation on basis states
    psi = _statevector([Gate("x", (0,))] + fwd + back, 4)
    assert abs(psi[0b1000]) == pytest.approx(1)
    with pytest.raises(CircuitError):
        swap_chain([0])


@pytest.mark.parametrize("index", range(4))
def test_bell_prepare_then_measure_returns_label(index):
    psi = _statevector(bell_prepare(0, 1, index) + bell_measure(0, 1)[:2], 2)
    probs = np.abs(psi) ** 2
    # basis index = 2 * bit(q0) + bit(q1); label = bit(q0) + 2 * bit(q1)
    expected = 2 * (index & 1) + (index >> 1)
    assert probs[expected] == pytest.approx(1)


def test_bell_states_are_the_textbook_ones():
    s = 1 / math.sqrt(2)
    want = {0: [s, 0, 0, s], 1: [s, 0, 0, -s], 2: [0, s, s, 0], 3: [0, s, -s, 0]}
    for i, v in want.items():
        assert np.allclose(_statevector(bell_prepare(0, 1, i), 2), v)


def _teleport_fragment():
    b = CircuitBuilder(3)
    b.add(bell_prepare(1, 2))
    b.gate("h", 0)
    m0, m1 = b.new_clbit(), b.new_clbit()
    b.add(bell_measure(0, 1, (m0, m1)))
    b.cond("x", 2, [m1]).cond("z", 2, [m0])
    return b.build()


def test_defer_measurements_rewrites_feedforward():
    c = _teleport_fragment()
    assert c.has_midcircuit_measurement()
    d = defer_measurements(c)
    assert d.metadata["exec_mode"] == "deferred"
    assert not d.has_midcircuit_measurement()
    ff = [g for g in d.ops if g.tag == "feedforward"]
    assert [(g.kind, g.qubits) for g in ff] == [("cx", (1, 2)), ("cz", (0, 2))]
    assert [g.kind for g in d.ops[-2:]] == ["measure", "measure"]
    assert d.num_clbits == c.num_clbits


def test_defer_parity_chain_and_hadamard_basis():
    b = CircuitBuilder(4)
    bits = [b.measure(0, "x"), b.measure(1, "x"), b.measure(2)]
    b.cond("z", 3, bits)
    d = defer_measurements(b.build())
    kinds = [(g.kind, g.qubits) for g in d.ops]
    assert kinds[:2] == [("h", (0,)), ("h", (1,))]
    assert [k for k in kinds if k[0] == "cz"] == [("cz", (0, 3)), ("cz", (1, 3)), ("cz", (2, 3))]
    assert all(g.basis == "z" for g in d.ops if g.kind == "measure")


def test_defer_without_feedforward_is_identity():
    b = CircuitBuilder(1)
    b.gate("h", 0)
    b.measure(0)
    c = b.build()
    assert defer_measurements(c) is c
    assert c.has_midcircuit_measurement() is False


def test_defer_rejects_unsupported_patterns():
    b = CircuitBuilder(2)
    m = b.measure(0)
    b.gate("x", 0)
    b.cond("x", 1, [m])
    with pytest.raises(UnsupportedPattern):
        defer_measurements(b.build())

    b = CircuitBuilder(2)
    m = b.measure(0)
    b.add(Gate("barrier", (0,)))
    b.cond("x", 1, [m])
    with pytest.raises(UnsupportedPattern):
        defer_measurements(b.build())

    ops = (Gate("cond", (1,), clbits=(0,), pauli="x"), Gate("measure", (0,), clbits=(0,)))
    with pytest.raises(UnsupportedPattern):
        defer_measurements(Circuit(2, ops, 1))


def test_dump_is_stable():
    text = dump(_teleport_fragment())
    assert text.splitlines()[0] == "qubits 3 clbits 2"
    assert "if c1: x q2" in text
    assert "measure[z] q0 -> c0" in text
    assert text == dump(_teleport_fragment())
