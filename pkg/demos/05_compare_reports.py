"""Diff a noisy scan against a noiseless one, placement by placement."""

# %%
from qpbench import ProtocolKind, ProtocolSpec
from qpbench.bench import compare_reports, scan_protocol, scan_report
from qpbench.fixtures import device, noise_model

g = device("line6")
spec = ProtocolSpec(ProtocolKind.BELL_TRANSFER, bell_index=3)


def report(model_name: str) -> dict:
    m = noise_model(model_name)
    return scan_report(g, m, spec, 5000, 9, scan_protocol(g, m, spec, 5000, 9))


diff = compare_reports(report("noiseless"), report("kolkata_like"))
for row in diff["placements"]:
    print(f"alice={row['placement']['alice']} L={row['L']} delta={row['delta']:+.4f} ({row['delta'] / row['sigma']:.0f} sigma)")
for row in diff["scan"]:
    print(f"L={row['L']} min_delta={row['min_delta']:+.4f} max_delta={row['max_delta']:+.4f}")
