"""Reduced-scale self checks, run by ``frogcoex verify``."""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable

import numpy as np

from . import coupling, frog, lattice, percolation, randfield
from .harness import TrialPlan, map_trials, wilson_interval


@dataclass(frozen=True)
class CheckResult:
    name: str
    ok: bool
    detail: str
    seconds: float


def check_vectors(path: Path | None = None) -> tuple[bool, str]:
    problems = randfield.check_test_vectors(path or randfield.VECTORS_PATH)
    return not problems, "; ".join(problems[:3]) or "all vectors match"


def check_g_oracle() -> tuple[bool, str]:
    worst = 0.0
    for d in (1, 2):
        for M in range(4):
            for p in (0.1, 0.5, 1.0):
                worst = max(worst, abs(percolation.g_exact(M, p, d) - percolation.g_bruteforce(M, p, d)))
    return worst <= 1e-12, f"max |g_exact - g_bruteforce| = {worst:.3g}"


def check_g_bound() -> tuple[bool, str]:
    for d in (1, 2, 3):
        for M in range(6):
            for p in (0.2, 0.6, 1.0):
                if percolation.g_exact(M, p, d) < percolation.g_lower_bound(M, p, d) - 1e-12:
                    return False, f"bound exceeds g at M={M}, p={p}, d={d}"
    return True, "g_exact >= lower bound"


def check_staircase() -> tuple[bool, str]:
    for start, end, bound in [((0, 0), (2, 2), 4), ((1, 0), (-2, -2), 4), ((0, 1, 0), (-2, 2, -2), 6)]:
        path = lattice.build_staircase_path(start, end, bound)
        if len(path) != lattice.l1_norm(start, end):
            return False, f"wrong length for {start} -> {end}"
        if any(lattice.l1_norm(s) >= bound for s in path.sites[:-1]):
            return False, f"bound violated for {start} -> {end}"
    return True, "paths valid"


def _invariant_problems(record: frog.RunRecord) -> list[str]:
    cfg = record.config
    out = []
    total = record.counts.sum(axis=1)
    released = sum(v.released for v in record.discoveries.values())
    if total[-1] != len(cfg.initial_actives) + released:
        out.append("particle conservation")
    if (np.diff(record.counts, axis=0) < 0).any():
        out.append("monotone counts")
    starts = [s for s, _ in cfg.initial_actives]
    for s, v in record.discoveries.items():
        if min(lattice.l1_norm(s, x) for x in starts) > v.time:
            out.append(f"ball containment at {s}")
            break
    return out


def check_frog_invariants(n_configs: int = 20) -> tuple[bool, str]:
    rng = np.random.default_rng(7)
    for c in range(n_configs):
        d = int(rng.integers(1, 4))
        k = int(rng.integers(1, 4))
        sites = set()
        while len(sites) < k:
            sites.add(tuple(int(v) for v in rng.integers(-2, 3, size=d)))
        cfg = frog.SimConfig(
            d=d,
            type_specs=tuple(frog.TypeSpec(i + 1, float(rng.uniform(0.2, 1.0))) for i in range(k)),
            initial_actives=tuple((s, i + 1) for i, s in enumerate(sorted(sites))),
            eta_spec=randfield.EtaSpec.two_point(int(rng.integers(1, 4)), 0.7),
            horizon=int(rng.integers(0, 12)),
            seed=int(rng.integers(0, 2**32)),
        )
        rec = frog.run(cfg)
        problems = _invariant_problems(rec)
        if problems:
            return False, f"config {c}: {', '.join(problems)}"
        if frog.run(cfg).to_json() != rec.to_json():
            return False, f"config {c}: rerun differs"
    return True, f"{n_configs} random configs"


def check_two_type(seeds: int = 8) -> tuple[bool, str]:
    setup = coupling.TwoTypeSetup(d=2, y=(1, 0), p1=1.0, p2=0.6, m=1, depth=10)
    flags = {}
    for tb in frog.TieBreak:
        s = replace(setup, tie_break=tb)
        outs = [coupling.run_two_type_trial(s, seed) for seed in range(seeds)]
        if not all(o.implication_holds for o in outs):
            return False, f"counterexample under tie-break {tb.value}"
        flags[tb] = [o.flags() for o in outs]
    if len({repr(v) for v in flags.values()}) != 1:
        return False, "flags depend on the tie-break policy"
    return True, f"{seeds} seeds x 3 tie-breaks"


def check_multitype(seeds: int = 3) -> tuple[bool, str]:
    setup = coupling.MultiTypeSetup(2, ((0, 0), (1, 0), (0, 1), (1, 1)), (1.0, 0.8, 0.6, 0.5), m=2, depth=8)
    for seed in range(seeds):
        out, rec, spec = coupling.run_multitype_trial(setup, seed)
        if not out.implication_holds:
            return False, f"counterexample at seed {seed}"
        keys = coupling.consumed_keys(rec.field, spec, setup.depth)
        if any(keys[i] & keys[j] for i in range(4) for j in range(i + 1, 4)):
            return False, f"shared percolation keys at seed {seed}"
    return True, f"{seeds} seeds"


def check_slab(seeds: int = 10) -> tuple[bool, str]:
    setup = coupling.SlabSetup(d=3, heights=tuple(range(4)), depth=6)
    for seed in range(seeds):
        if not coupling.run_slab_trial(setup, seed).implication_holds:
            return False, f"non-exclusive activation at seed {seed}"
    return True, f"{seeds} seeds"


def check_harness() -> tuple[bool, str]:
    lo, hi = wilson_interval(0, 100)
    if lo != 0.0 or abs(hi - 0.0370) > 5e-4:
        return False, f"wilson(0, 100) = ({lo}, {hi})"
    plan = TrialPlan(5, 6)
    a = map_trials(plan, randfield.mix64_int)
    b = map_trials(replace(plan, workers=2), randfield.mix64_int)
    if a != b:
        return False, "results depend on worker count"
    return True, "wilson and worker determinism"


CHECKS: dict[str, Callable[[], tuple[bool, str]]] = {
    "rand-field test vectors": check_vectors,
    "g_exact vs g_bruteforce": check_g_oracle,
    "g lower bound": check_g_bound,
    "staircase paths": check_staircase,
    "frog invariants": check_frog_invariants,
    "two-type implication": check_two_type,
    "2^d-type implication": check_multitype,
    "slab exclusive activation": check_slab,
    "harness": check_harness,
}


def run_checks(vectors_path: Path | None = None) -> list[CheckResult]:
    out = []
    for name, fn in CHECKS.items():
        t0 = time.perf_counter()
        try:
            ok, detail = check_vectors(vectors_path) if fn is check_vectors else fn()
        except Exception as exc:  # a crash is a failed check, not a crashed verifier
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append(CheckResult(name, ok, detail, time.perf_counter() - t0))
    return out
