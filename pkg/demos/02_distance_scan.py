"""Best and worst placement per distance on the 15-qubit heavy-square device.

This is the scan behind a min/max-versus-distance plot: every shortest
linear subset is a candidate path, and each distance keeps its best and
worst fidelity.
"""

# %%
from qpbench import ProtocolKind, ProtocolSpec
from qpbench.bench import dumps_report, plot_data, scan_protocol, scan_report
from qpbench.fixtures import device, noise_model

g = device("melbourne15")
toy = noise_model("toy_uniform")
spec = ProtocolSpec(ProtocolKind.DO_NOTHING)

out = scan_protocol(g, toy, spec, shots=4000, seed=3)
print(f"{len(out.results)} placements")
for row in out.scan.rows:
    print(f"L={row.L:<2} paths={row.num_paths:<3} min={row.min_fidelity:.4f} max={row.max_fidelity:.4f}"
          f"  worst alice={row.worst_path.alice} bob={row.worst_path.bob}")

# %% report and two-column plot data
report = scan_report(g, toy, spec, 4000, 3, out)
print(plot_data(report))
print(len(dumps_report(report)), "bytes of JSON")
