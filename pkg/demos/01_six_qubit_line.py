"""Seven protocols on a six-qubit line.

Runs every protocol once at its largest distance under the noiseless model
and under the shipped kolkata_like fixture, and compares the noisy numbers
with the recorded vendor-simulator reference values.
"""

# %%
from qpbench import ProtocolKind, ProtocolSpec
from qpbench.bench import placements_for, run_placement
from qpbench.fixtures import device, noise_model
from qpbench.protocols import REFERENCE_FIDELITIES

g = device("line6")
ideal = noise_model("noiseless")
model = noise_model("kolkata_like")

specs = [
    ProtocolSpec(ProtocolKind.DO_NOTHING),
    ProtocolSpec(ProtocolKind.SUPERDENSE),
    ProtocolSpec(ProtocolKind.BELL_TRANSFER),
    ProtocolSpec(ProtocolKind.TELEPORTATION),
    ProtocolSpec(ProtocolKind.ENT_SWAP),
    ProtocolSpec(ProtocolKind.GEN_DO_NOTHING, M=3),
    ProtocolSpec(ProtocolKind.CAT_STATE, M=4, J=2),
]

# %% each protocol at its longest placement
print(f"{'protocol':<20} {'L':>2} {'ideal':>6} {'noisy':>14}  verdict")
for spec in specs:
    ps = placements_for(g, spec)
    far = max(p.distance for p in ps)
    p = next(p for p in ps if p.distance == far)
    clean = run_placement(g, ideal, spec, p, shots=1000, seed=1)
    noisy = run_placement(g, model, spec, p, shots=10_000, seed=1)
    print(f"{spec.label:<20} {p.distance:>2} {clean.value:>6.3f} {noisy.value:>7.4f} +/- {noisy.std_error:.4f}  {noisy.verdict}")
    for name, est in noisy.per_qubit.items():
        if len(noisy.per_qubit) > 1:
            print(f"{'':<24}{name}: {est.value:.4f}")

# %% the reference values come from proprietary calibration data
for k, v in REFERENCE_FIDELITIES.items():
    print(f"reference  {k}: {v}")
