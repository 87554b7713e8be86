"""Four types in the plane, and a slab of eight types in three dimensions.

With 2^d types on the corners of a unit cube, each type is steered to its own
corner of a larger box and takes the orthant pointing away from the others.
In d >= 3, types stacked on a vertical line each take a quadrant inside their
own horizontal plane, so any number of types can coexist.
"""

from __future__ import annotations

import numpy as np

from frogcoex.coupling import MultiTypeSetup, SlabSetup, coexistence_trials, consumed_keys, run_multitype_trial

four = MultiTypeSetup(2, ((0, 0), (1, 0), (0, 1), (1, 1)), (1.0, 0.8, 0.6, 0.5), m=2, depth=12)
out, rec, spec = run_multitype_trial(four, seed=5)
keys = consumed_keys(rec.field, spec, four.depth)
print(f"four types, M={four.M}: percolating {out.percolates}, owned {out.owned}")
print("percolation keys shared between types:", any(keys[i] & keys[j] for i in range(4) for j in range(i + 1, 4)))

slab = SlabSetup(d=3, heights=tuple(range(8)), depth=8)
outs = coexistence_trials(slab, 200, True, seed=6)
E = np.array([o.E for o in outs])
print(f"\nslab, 8 types, M={slab.M}, q={slab.open_probability():.3f}")
print("P(E_i):", np.round(E.mean(axis=0), 3))
print("all eight percolate in", int(E.all(axis=1).sum()), "of", len(outs), "runs")
print("exclusive activation whenever E_i holds:", all(o.implication_holds for o in outs))
