"""The branch-history register and its collision-based readout.

A taken branch shifts a 2-bit footprint of (branch, target) addresses
into a 194-doublet register; not-taken branches leave it alone. One tree
node costs nine doublets: eight fixed loop branches plus one whose value
says left (3) or right (2). The readout loop recovers the register one
doublet at a time by forcing predictor collisions and watching the
mispredict counter spike.
"""
from treestealer import (
    BranchTrace,
    PhtSim,
    decode_branch_trace,
    encode_inference,
    extract_via_collisions,
    footprint,
    format_doublets,
)
from treestealer.channel import exit_doublet_sequence
from treestealer.phr import PHR_CAPACITY

print("footprint(0x4ab4, 0x4ab4 ^ 2) =", footprint(0x4AB4, 0x4AB4 ^ 2))

for text in ("LLLLL", "RLRLR"):
    stream = encode_inference(BranchTrace.from_text(text))
    # Drop the root's fixed block to show the distinctive part, newest first.
    print(f"path {text}: register content {format_doublets(stream[:-8])} <- root")

# What the attacker actually faces: the traversal doublets buried under
# 103 enclave-exit doublets. Read the register back through predictor
# collisions, then parse the per-node patterns.
trace = BranchTrace.from_text("RLLRL")
register = (list(reversed(exit_doublet_sequence(103))) + encode_inference(trace))
register = (register + [0] * PHR_CAPACITY)[:PHR_CAPACITY]

counts = []
recovered = extract_via_collisions(register, PhtSim(), probe_counts=counts)
print("collision readout recovered the register:", recovered == register)
print("mispredict counts while probing doublet 0:", counts[0],
      f"(spike at candidate {register[0]})")

decoded = decode_branch_trace(recovered, exit_count=103)
print(f"decoded trace: {decoded.trace.to_text()} "
      f"(truncated: {decoded.truncated})")

# Deeper than 11 decisions does not fit: 103 exit doublets leave 91,
# which is ten 9-doublet patterns plus a single doublet for the decision
# after the root. The twelfth-from-last decision is pushed out first.
deep = BranchTrace([1] + [0] * 11)
register = (list(reversed(exit_doublet_sequence(103))) + encode_inference(deep))[:PHR_CAPACITY]
decoded = decode_branch_trace(register, exit_count=103)
print(f"depth-12 traversal: recovered {len(decoded.trace)} of 12 decisions, "
      f"truncated={decoded.truncated} (the root's R is gone: "
      f"{decoded.trace.to_text()})")
