"""Build the interlaced block masks for a short trimodal sequence and look at them.

A fused sequence is the concatenation text | vision | audio. Each mask is additive:
0 where a query may attend, a large negative number where it may not.
"""

import numpy as np

from gsifn.masking import STRUCTURES, gen_interlaced_mask, gen_structure_mask


def show(title: str, matrix: np.ndarray) -> None:
    print(title)
    for row in matrix:
        print("   " + " ".join("." if v == 0 else "#" for v in row))
    print()


seg = (3, 2, 2)  # text, vision, audio lengths
forward = gen_interlaced_mask(seg, "inter", "forward")
backward = gen_interlaced_mask(seg, "inter", "backward")
intra = gen_interlaced_mask(seg, "intra")

show("forward ring ('.' = may attend):", forward.matrix)
show("backward ring:", backward.matrix)
show("intra-modal enhancement:", intra.matrix)

for name, mask in (("forward", forward), ("backward", backward), ("intra", intra)):
    edges = sorted(mask.visible_blocks())
    print(f"{name:>8}: target <- source blocks {edges}")

cover = forward.pattern.astype(int) + backward.pattern.astype(int) + intra.pattern.astype(int)
print("\nevery (target, source) block is used by exactly one mask:", bool((cover == 1).all()))

print("\nblock grids of the alternative structures (rows t, v, a; 1 = visible):")
for s in STRUCTURES:
    f = gen_structure_mask((1, 1, 1), s, "forward").pattern.astype(int)
    b = gen_structure_mask((1, 1, 1), s, "backward").pattern.astype(int)
    print(f"  {s:<11} forward {f.tolist()}  backward {b.tolist()}")
