"""Build a blockage-aware hierarchical codebook and look at what it radiates.

Places a few discs in front of a 32-element array, detects the blocked
direction-cosine set, builds the pruned tree and prints, per layer, how many
codewords survive and how much power the live ones leak into the blocked set.

    python3 demos/pruned_codebook.py
"""

import numpy as np

from blockhcb.angular import ArrayLayout, ula_steering_matrix
from blockhcb.blockage import detect_blockage, place_blockages
from blockhcb.gs import FULL_U, build_hierarchy, flat_top_level

M = 32
LAM = 299_792_458.0 / 60e9

layout = ArrayLayout.ula(M, LAM)
scene = place_blockages(layout.positions, 0.3, np.random.default_rng(2))
rep = detect_blockage(layout, None, scene)
print(f"{scene.count} discs block {100 * rep.blocked_fraction_u:.1f}% of u in [-1, 1]")
print("blocked u:", [(round(a, 3), round(b, 3)) for a, b in rep.blocked_u.to_pairs()])

aware = build_hierarchy(rep.available_u, M, seed=0)
plain = build_hierarchy(FULL_U, M, seed=0)

u_blk = np.linspace(-1, 1, 4001)
u_blk = u_blk[rep.blocked_u.contains(u_blk)]
A_blk = ula_steering_matrix(M, u_blk)


def worst_leak_db(cw):
    ref = flat_top_level(M, cw.sector.measure)
    return 10 * np.log10(np.max(np.abs(A_blk.conj().T @ cw.weights) ** 2) / ref)


print(f"\n{'layer':>5} {'live':>6} {'aware leak':>11} {'plain leak':>11}   (median, dB re flat top)")
for s in range(1, aware.S + 1):
    live = [(a, p) for a, p in zip(aware.layers[s - 1], plain.layers[s - 1]) if not a.pruned]
    la = np.median([worst_leak_db(a) for a, _ in live])
    lp = np.median([worst_leak_db(p) for _, p in live])
    print(f"{s:>5} {len(live):>3}/{2**s:<2} {la:>11.1f} {lp:>11.1f}")
