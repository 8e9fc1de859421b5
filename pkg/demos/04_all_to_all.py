"""All-to-all devices: every pair is at distance one.

On a complete graph a shortest linear subset has just two qubits, so only
do-nothing fits a single line. The other protocols use one direct transfer
path per sent qubit. Placements grow factorially with the qubit count
(ent-swap alone has 332640 on eleven qubits), so the scan is restricted to
six of them, which still covers every pairing up to relabelling.
"""

# %%
from qpbench.bench import basic_specs, scan_protocol
from qpbench.fixtures import device, noise_model
from qpbench.noise import NoiseModel

g = device("complete11")
uniform = NoiseModel.uniform(11, t1=10.0, t2=1.0, readout=0.005, p1q=2e-4, p2q=3e-3,
                             gate1q_time=1e-5, gate2q_time=2e-4, measure_time=1e-4, name="ion-like")

for spec in basic_specs():
    out = scan_protocol(g, uniform, spec, shots=2000, seed=0, qubits=range(6), multipath=spec.label != "do-nothing")
    row = out.scan.rows[0]
    print(f"{spec.label:<14} placements={row.num_paths:<5} L={row.L} min={row.min_fidelity:.4f} max={row.max_fidelity:.4f}")
