"""How likely is a site to be open?

A site with M dormant frogs is open when, among the M+1 particles that
eventually sit there, every orthant direction is taken by some particle that
actually moves. That probability g(M, p, d) climbs to 1 as M grows, which is
what makes the coupled percolation supercritical for large M.
"""

from __future__ import annotations

from frogcoex import g_exact, g_lower_bound, smallest_M

print("g(M, p, d) next to its simple lower bound")
print(f"{'d':>2} {'M':>3} {'p':>5} {'g':>10} {'bound':>10}")
for d in (1, 2, 3):
    for M in (0, 2, 5, 10):
        for p in (0.3, 1.0):
            print(f"{d:>2} {M:>3} {p:>5} {g_exact(M, p, d):>10.6f} {g_lower_bound(M, p, d):>10.6f}")

print("\nsmallest M with g > 0.99")
for p in (0.1, 0.3, 1.0):
    print(f"  p={p}: d=2 -> M={smallest_M(p, 2, 0.99)}, d=3 -> M={smallest_M(p, 3, 0.99)}")
