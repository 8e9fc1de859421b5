"""Protocol vector of a line with one bad qubit, and the subchip that avoids it."""

# %%
from qpbench.bench import find_effective_subchip, protocol_vector
from qpbench.fixtures import device, noise_model
from qpbench.protocols import THRESHOLD_VECTOR

g = device("line8")
bad = noise_model("bad_qubit8")  # qubit 3 has p1q = 0.5 and 40% readout error

v = protocol_vector(g, bad, shots=2000, seed=0)
for r, t, q in zip(v.worst, THRESHOLD_VECTOR, v.verdicts):
    print(f"{r.spec.label:<14} worst {r.value:.3f} (bound {t:.3f})  {'quantum' if q else 'classical'}"
          f"  on {list(r.placement.qubits)}")

# %% greedy exclusion and the exhaustive check agree
for strategy in ("greedy", "exhaustive"):
    s = find_effective_subchip(g, bad, shots=2000, seed=0, strategy=strategy)
    print(strategy, "keeps", list(s.retained), "drops", list(s.excluded))
    print("  post-exclusion worst fidelities:", {k: None if x is None else round(x, 3) for k, x in s.vector.items()})
