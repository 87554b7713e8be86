"""Where does oriented site percolation start to cross?

Estimates the probability that the open cluster of the orthant corner reaches
depth L, for a few q, then bisects for the level-0.5 point. At moderate L this
finite-size point sits above the infinite-volume threshold, because survival
at criticality decays with L.
"""

from __future__ import annotations

from frogcoex.percolation import estimate_crossing_prob, estimate_threshold

L = 32
for q in (0.6, 0.7, 0.75, 0.8):
    e = estimate_crossing_prob(2, q, L, 2000, seed=1)
    print(f"q={q:.2f}: P(reach depth {L}) = {e.point:.3f}  [{e.wilson_lo:.3f}, {e.wilson_hi:.3f}]")

res = estimate_threshold(2, L, 2000, 0.01, seed=1)
print(f"level-0.5 crossing point at L={L}: [{res.lo:.3f}, {res.hi:.3f}]")
cl = estimate_crossing_prob(1, 0.9, 10, 20000, seed=2)
print(f"d=1 sanity: MC {cl.point:.4f} vs q^(L+1) = {0.9 ** 11:.4f}")
