"""Finite-depth checks of the coexistence constructions.

Each start particle is routed along a staircase path to a corner ``m * theta``
by overriding the finitely many tuples its cohort reads on the way. From the
corner on, orthant percolation on the shared field decides whether the type
owns an open cluster. A trial then checks, on the simulated run, that

* no foreign particle sits at depth ``l`` of an orthant by time ``ell + l``
  (blocking),
* every open-cluster site at depth ``l`` is discovered at exactly ``ell + l``
  by the orthant's own type (diagonal timing),

and reports coexistence at depth L when every type percolates and owns its
cluster.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import partial
from typing import Mapping, Sequence

import numpy as np

from .frog import RunRecord, SimConfig, TieBreak, TypeSpec, run
from .harness import Estimate, TrialPlan, map_trials
from .lattice import (
    LatticePath,
    LatticeError,
    Orthant,
    Site,
    as_site,
    build_staircase_path,
    corner_map,
    l1_norm,
    slab_orthant,
    unit,
)
from .percolation import PC_UPPER, Cluster, PercConfig, explore_cluster, g_exact, min_M_for_supercritical
from .randfield import EtaSpec, OverrideKey, RandomField, RecordingField, TupleSample, with_overrides


class SetupError(ValueError):
    pass


@dataclass(frozen=True)
class EventSpec:
    """Paths, orthant percolation configs and forced prefix tuples, one entry per type."""

    types: tuple[int, ...]
    paths: tuple[LatticePath, ...]
    perc: tuple[PercConfig, ...]
    overrides: Mapping[OverrideKey, TupleSample]
    M: int
    m: int

    @property
    def offsets(self) -> tuple[int, ...]:
        return tuple(c.ell for c in self.perc)

    @property
    def orthants(self) -> tuple[Orthant, ...]:
        return tuple(c.orthant for c in self.perc)


def prefix_overrides(path: LatticePath, max_eta: int) -> dict[OverrideKey, TupleSample]:
    """Tuples that march a cohort along ``path`` without laziness.

    At time ``n`` the cohort sits at ``path[n]`` and holds at most
    ``1 + max_eta * n`` particles, so that many slots are forced.
    """
    out: dict[OverrideKey, TupleSample] = {}
    for n in range(len(path)):
        here, nxt = path[n], path[n + 1]
        inc = tuple(b - a for a, b in zip(here, nxt))
        forced = TupleSample(inc, 0.0)
        for j in range(1, 2 + max_eta * n):
            out[(here, j, n)] = forced
    return out


def _check_paths_apart(paths: Sequence[LatticePath]) -> None:
    seen: dict[tuple[Site, int], int] = {}
    for i, path in enumerate(paths):
        for n, s in enumerate(path.sites[:-1]):
            other = seen.setdefault((s, n), i)
            if other != i:
                raise SetupError(f"paths {other} and {i} both use site {s} at time {n}")


def force_open_overrides(cfg: PercConfig, depth: int) -> dict[OverrideKey, TupleSample]:
    """Tuples making every orthant site up to ``depth`` pass the coverage test."""
    o = cfg.orthant
    if cfg.M + 1 < o.dim:
        raise SetupError(f"M + 1 = {cfg.M + 1} tuples cannot cover {o.dim} directions")
    covers = [TupleSample(unit(o.d, j, o.direction[j]), 0.0) for j in o.axes]
    out = {}
    for a in range(depth + 1):
        for s in o.layer(a):
            for i in range(1, cfg.M + 2):
                out[(s, i, cfg.ell + a)] = covers[(i - 1) % len(covers)]
    return out


def force_closed_overrides(cfg: PercConfig, site: Sequence[int]) -> dict[OverrideKey, TupleSample]:
    """Tuples that point every one of the M+1 slots away from the first free axis."""
    o = cfg.orthant
    j = o.axes[0]
    away = TupleSample(unit(o.d, j, -o.direction[j]), 0.0)
    return {k: away for k in cfg.keys_for(site)}


@dataclass(frozen=True)
class TrialOutcome:
    seed: int
    types: tuple[int, ...]
    a12: bool  # every cohort observed exactly on its path up to its corner
    percolates: tuple[bool, ...]
    blocking: tuple[bool, ...]
    timing: tuple[bool, ...]
    owned: tuple[bool, ...]  # cluster to depth L discovered by the orthant's own type only
    final_counts: tuple[int, ...]
    cluster_sizes: tuple[int, ...] = ()

    @property
    def a3_to_depth_L(self) -> bool:
        return self.percolates[0]

    @property
    def a4_to_depth_L(self) -> bool:
        return self.percolates[1]

    @property
    def a12_forced_or_observed(self) -> bool:
        return self.a12

    @property
    def blocking_ok(self) -> bool:
        return all(self.blocking)

    @property
    def diagonal_timing_ok(self) -> bool:
        return all(self.timing)

    @property
    def coexist_proxy(self) -> bool:
        return all(self.percolates) and all(self.owned)

    @property
    def premise(self) -> bool:
        return self.a12 and all(self.percolates)

    @property
    def implication_holds(self) -> bool:
        return (not self.premise) or (self.blocking_ok and self.diagonal_timing_ok and self.coexist_proxy)

    def flags(self) -> dict[str, bool]:
        return {
            "a12_forced_or_observed": self.a12,
            "percolates": list(self.percolates),
            "blocking_ok": self.blocking_ok,
            "diagonal_timing_ok": self.diagonal_timing_ok,
            "coexist_proxy": self.coexist_proxy,
        }

    def to_dict(self) -> dict:
        return {"seed": self.seed, "types": list(self.types), **self.flags(), "final_counts": list(self.final_counts)}


# -- checks on a finished run -----------------------------------------------

def _depths_in(o: Orthant, sites: np.ndarray) -> np.ndarray:
    """Orthant depth of each row, -1 for rows outside."""
    if not sites.shape[0]:
        return np.zeros(0, dtype=np.int64)
    corner = np.asarray(o.corner, dtype=np.int64)
    sign = np.asarray(o.direction, dtype=np.int64)
    delta = (sites - corner) * sign
    inside = np.ones(sites.shape[0], dtype=bool)
    for j in o.frozen:
        inside &= delta[:, j] == 0
    free = list(o.axes)
    inside &= (delta[:, free] >= 0).all(axis=1)
    return np.where(inside, delta[:, free].sum(axis=1), -1)


def check_prefixes(record: RunRecord, spec: EventSpec) -> bool:
    """True iff every type's particles are all on ``path[n]`` at each time ``n <= len(path)``."""
    for i, path in zip(spec.types, spec.paths):
        for n in range(min(len(path), record.final_time) + 1):
            if record.active_locations(n, i) != {path[n]}:
                return False
    return True


def blocking_flags(record: RunRecord, spec: EventSpec, depth: int) -> tuple[bool, ...]:
    out = []
    for i, cfg in zip(spec.types, spec.perc):
        ok = True
        last = min(record.final_time, cfg.ell + depth)
        for n in range(last + 1):
            for j in spec.types:
                if j == i:
                    continue
                dep = _depths_in(cfg.orthant, record.occupied(n, j))
                if ((dep >= 0) & (dep <= depth) & (n <= cfg.ell + dep)).any():
                    ok = False
                    break
            if not ok:
                break
        out.append(ok)
    return tuple(out)


def check_blocking(record: RunRecord, spec: EventSpec, depth: int) -> bool:
    """No foreign particle at depth ``l <= depth`` of an orthant by time ``ell + l``."""
    return all(blocking_flags(record, spec, depth))


def clusters_for(record: RunRecord, spec: EventSpec, depth: int) -> list[Cluster]:
    return [explore_cluster(record.field, cfg, depth) for cfg in spec.perc]


def timing_flags(record: RunRecord, spec: EventSpec, depth: int, clusters: Sequence[Cluster] | None = None) -> tuple[bool, ...]:
    if clusters is None:
        clusters = clusters_for(record, spec, depth)
    out = []
    for i, cfg, cl in zip(spec.types, spec.perc, clusters):
        ok = True
        for s, a in cl.members.items():
            if cfg.ell + a > record.final_time:
                continue
            if record.discovery(s) != (cfg.ell + a, i):
                ok = False
                break
        out.append(ok)
    return tuple(out)


def check_diagonal_activation(record: RunRecord, spec: EventSpec, depth: int, clusters: Sequence[Cluster] | None = None) -> bool:
    """Every open-cluster site at depth ``l`` was discovered at ``ell + l`` by its orthant's type."""
    return all(timing_flags(record, spec, depth, clusters))


def ownership_flags(record: RunRecord, spec: EventSpec, clusters: Sequence[Cluster]) -> tuple[bool, ...]:
    out = []
    for i, cl in zip(spec.types, clusters):
        found = [record.discovery(s) for s in cl.members]
        out.append(bool(found) and all(f is not None and f[1] == i for f in found))
    return tuple(out)


def consumed_keys(field_access, spec: EventSpec, depth: int) -> list[set[OverrideKey]]:
    """Tuple keys read while exploring each type's cluster."""
    out = []
    for cfg in spec.perc:
        rec = RecordingField(field_access)
        explore_cluster(rec, cfg, depth)
        out.append(rec.keys)
    return out


def evaluate(record: RunRecord, spec: EventSpec, depth: int, seed: int) -> TrialOutcome:
    clusters = clusters_for(record, spec, depth)
    return TrialOutcome(
        seed=seed,
        types=spec.types,
        a12=check_prefixes(record, spec),
        percolates=tuple(c.percolates for c in clusters),
        blocking=blocking_flags(record, spec, depth),
        timing=timing_flags(record, spec, depth, clusters),
        owned=ownership_flags(record, spec, clusters),
        final_counts=tuple(int(x) for x in record.counts[-1]),
        cluster_sizes=tuple(len(c) for c in clusters),
    )


# -- two types ----------------------------------------------------------------

@dataclass(frozen=True)
class TwoTypeSetup:
    d: int = 2
    y: Site = (1, 0)
    p1: float = 1.0
    p2: float = 0.6
    m: int = 1
    M: int | None = None
    eta_spec: EtaSpec | None = None
    depth: int = 16
    tie_break: TieBreak = TieBreak.LOWEST
    pc_upper: float | None = None
    require_supercritical: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "y", as_site(self.y))
        object.__setattr__(self, "tie_break", TieBreak(self.tie_break))
        if self.d < 2:
            raise SetupError("two-type coexistence needs d ≥ 2")
        if len(self.y) != self.d:
            raise SetupError(f"y = {self.y} is not a point of Z^{self.d}")
        if not any(self.y):
            raise SetupError("y must differ from the origin")
        for p in (self.p1, self.p2):
            if not 0.0 < p <= 1.0:
                raise SetupError(f"laziness must lie in (0, 1], got {p}")
        if self.m < l1_norm(self.y):
            raise SetupError(f"need m >= |y|_1 = {l1_norm(self.y)}, got m = {self.m}")
        if self.depth < 0:
            raise SetupError("depth must be nonnegative")
        pc = PC_UPPER.get(self.d) if self.pc_upper is None else self.pc_upper
        if pc is None:
            raise SetupError(f"no threshold bound on file for d={self.d}; pass pc_upper")
        object.__setattr__(self, "pc_upper", pc)
        M = self.M
        if M is None:
            theta = 1.0 if self.eta_spec is None else self.eta_spec.prob
            M = min_M_for_supercritical(self.p, self.d, theta, pc)
            object.__setattr__(self, "M", M)
        if self.eta_spec is None:
            object.__setattr__(self, "eta_spec", EtaSpec.deterministic(M))
        if self.require_supercritical:
            q = self.eta_spec.prob_at_least(M) * g_exact(M, self.p, self.d)
            if q <= pc:
                raise SetupError(f"open probability {q:.4f} does not exceed pc_upper={pc}; raise M or theta")

    @property
    def p(self) -> float:
        return min(self.p1, self.p2)

    @property
    def md(self) -> int:
        return self.m * self.d

    @property
    def k(self) -> int:
        return l1_norm(self.y, (-self.m,) * self.d)

    @property
    def horizon(self) -> int:
        return self.md + self.k + self.depth + 1


def two_type_paths(d: int, y: Sequence[int], m: int) -> tuple[LatticePath, LatticePath]:
    """Staircases 0 -> (m,..,m) and y -> (-m,..,-m), interior norms below m d."""
    md = m * d
    try:
        pi1 = build_staircase_path((0,) * d, (m,) * d, md)
        pi2 = build_staircase_path(y, (-m,) * d, md)
    except LatticeError as exc:
        raise SetupError(f"path construction failed: {exc}") from exc
    _check_paths_apart([pi1, pi2])
    return pi1, pi2


def build_two_type_events(setup: TwoTypeSetup) -> EventSpec:
    d, m, md = setup.d, setup.m, setup.md
    plus, minus = (m,) * d, (-m,) * d
    pi1, pi2 = two_type_paths(d, setup.y, m)
    perc = (
        PercConfig(setup.M, setup.p, md, Orthant(plus, (1,) * d), setup.eta_spec),
        PercConfig(setup.M, setup.p, setup.k, Orthant(minus, (-1,) * d), setup.eta_spec),
    )
    ov = prefix_overrides(pi1, setup.eta_spec.max_value)
    ov.update(prefix_overrides(pi2, setup.eta_spec.max_value))
    return EventSpec((1, 2), (pi1, pi2), perc, ov, setup.M, m)


def two_type_config(setup: TwoTypeSetup, seed: int, overrides: Mapping | None) -> SimConfig:
    return SimConfig(
        d=setup.d,
        type_specs=(TypeSpec(1, setup.p1), TypeSpec(2, setup.p2)),
        initial_actives=(((0,) * setup.d, 1), (setup.y, 2)),
        eta_spec=setup.eta_spec,
        tie_break=setup.tie_break,
        horizon=setup.horizon,
        seed=seed,
        overrides=overrides,
        record_locations=True,
    )


def run_two_type_trial(setup: TwoTypeSetup, seed: int, forced: bool = True, extra_overrides: Mapping | None = None) -> TrialOutcome:
    spec = build_two_type_events(setup)
    ov = dict(spec.overrides) if forced else {}
    ov.update(extra_overrides or {})
    record = run(two_type_config(setup, seed, ov))
    return evaluate(record, spec, setup.depth, seed)


# -- 2^d types ----------------------------------------------------------------

@dataclass(frozen=True)
class MultiTypeSetup:
    d: int
    starts: tuple[Site, ...]
    laziness: tuple[float, ...]
    m: int
    M: int | None = None
    eta_spec: EtaSpec | None = None
    depth: int = 12
    tie_break: TieBreak = TieBreak.LOWEST
    pc_upper: float | None = None
    require_supercritical: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "starts", tuple(as_site(s) for s in self.starts))
        object.__setattr__(self, "laziness", tuple(float(p) for p in self.laziness))
        object.__setattr__(self, "tie_break", TieBreak(self.tie_break))
        if self.d < 2:
            raise SetupError("2^d-type coexistence needs d ≥ 2")
        if len(self.starts) != 2**self.d:
            raise SetupError(f"needs 2^d = {2**self.d} start sites, got {len(self.starts)}")
        if len(self.laziness) != len(self.starts):
            raise SetupError("one laziness value per type")
        if any(not 0.0 < p <= 1.0 for p in self.laziness):
            raise SetupError("laziness must lie in (0, 1]")
        if len(set(self.starts)) != len(self.starts):
            raise SetupError("start sites must be distinct")
        if any(len(s) != self.d for s in self.starts):
            raise SetupError("start sites have the wrong dimension")
        if any(l1_norm(s) > self.m for s in self.starts):
            raise SetupError(f"every start needs |x|_1 <= m = {self.m}")
        pc = PC_UPPER.get(self.d) if self.pc_upper is None else self.pc_upper
        if pc is None:
            raise SetupError(f"no threshold bound on file for d={self.d}; pass pc_upper")
        object.__setattr__(self, "pc_upper", pc)
        if self.M is None:
            theta = 1.0 if self.eta_spec is None else self.eta_spec.prob
            object.__setattr__(self, "M", min_M_for_supercritical(self.p, self.d, theta, pc))
        if self.eta_spec is None:
            object.__setattr__(self, "eta_spec", EtaSpec.deterministic(self.M))
        if self.require_supercritical:
            q = self.eta_spec.prob_at_least(self.M) * g_exact(self.M, self.p, self.d)
            if q <= pc:
                raise SetupError(f"open probability {q:.4f} does not exceed pc_upper={pc}")

    @property
    def p(self) -> float:
        return min(self.laziness)


def build_multitype_events(setup: MultiTypeSetup) -> EventSpec:
    """Corner bijection, staircase paths and orthants with ``ell = k_i``.

    Path sites before the corner are kept below norm ``m d``: the corners
    themselves have norm ``m d``, so no tighter bound is reachable.
    """
    assign = corner_map(setup.starts, setup.m)
    md = setup.m * setup.d
    paths, perc = [], []
    for a in assign:
        try:
            paths.append(build_staircase_path(a.point, a.corner, md))
        except LatticeError as exc:
            raise SetupError(f"path construction failed: {exc}") from exc
        perc.append(PercConfig(setup.M, setup.p, a.k, Orthant(a.corner, a.theta), setup.eta_spec))
    _check_paths_apart(paths)
    ov: dict = {}
    for path in paths:
        ov.update(prefix_overrides(path, setup.eta_spec.max_value))
    types = tuple(range(1, len(paths) + 1))
    return EventSpec(types, tuple(paths), tuple(perc), ov, setup.M, setup.m)


def run_multitype_trial(setup: MultiTypeSetup, seed: int, forced: bool = True, extra_overrides: Mapping | None = None) -> tuple[TrialOutcome, RunRecord, EventSpec]:
    spec = build_multitype_events(setup)
    ov = dict(spec.overrides) if forced else {}
    ov.update(extra_overrides or {})
    horizon = max(spec.offsets) + setup.depth + 1
    cfg = SimConfig(
        d=setup.d,
        type_specs=tuple(TypeSpec(i, p) for i, p in zip(spec.types, setup.laziness)),
        initial_actives=tuple(zip(setup.starts, spec.types)),
        eta_spec=setup.eta_spec,
        tie_break=setup.tie_break,
        horizon=horizon,
        seed=seed,
        overrides=ov,
        record_locations=True,
    )
    record = run(cfg)
    return evaluate(record, spec, setup.depth, seed), record, spec


# -- slabs: many types in d >= 3 ----------------------------------------------

@dataclass(frozen=True)
class SlabSetup:
    d: int = 3
    heights: tuple[int, ...] = tuple(range(8))
    base: tuple[int, ...] | None = None  # shared first d-1 coordinates
    laziness: tuple[float, ...] | None = None
    M: int | None = None
    eta_spec: EtaSpec | None = None
    depth: int = 8
    pc_upper: float | None = None

    def __post_init__(self) -> None:
        if self.d < 3:
            raise SetupError("the slab construction requires d ≥ 3")
        heights = tuple(int(h) for h in self.heights)
        object.__setattr__(self, "heights", heights)
        if len(set(heights)) != len(heights):
            raise SetupError("start sites must differ in the last coordinate")
        if not heights:
            raise SetupError("need at least one type")
        base = (0,) * (self.d - 1) if self.base is None else tuple(int(b) for b in self.base)
        if len(base) != self.d - 1:
            raise SetupError("base must have d-1 coordinates")
        object.__setattr__(self, "base", base)
        laz = (1.0,) * len(heights) if self.laziness is None else tuple(float(p) for p in self.laziness)
        if len(laz) != len(heights) or any(not 0.0 < p <= 1.0 for p in laz):
            raise SetupError("one laziness value in (0, 1] per type")
        object.__setattr__(self, "laziness", laz)
        pc = PC_UPPER.get(self.d - 1) if self.pc_upper is None else self.pc_upper
        object.__setattr__(self, "pc_upper", pc)
        if self.M is None:
            theta = 1.0 if self.eta_spec is None else self.eta_spec.prob
            object.__setattr__(self, "M", min_M_for_supercritical(self.p0, self.d - 1, theta, pc, d_walk=self.d))
        if self.eta_spec is None:
            object.__setattr__(self, "eta_spec", EtaSpec.deterministic(self.M))

    @property
    def p0(self) -> float:
        return min(self.laziness)

    @property
    def starts(self) -> tuple[Site, ...]:
        return tuple(self.base + (h,) for h in self.heights)

    @property
    def types(self) -> tuple[int, ...]:
        return tuple(range(1, len(self.heights) + 1))

    def perc_configs(self) -> tuple[PercConfig, ...]:
        return tuple(PercConfig(self.M, self.p0, 0, slab_orthant(s), self.eta_spec) for s in self.starts)

    def open_probability(self) -> float:
        return self.eta_spec.prob_at_least(self.M) * g_exact(self.M, self.p0, self.d, self.d - 1)


@dataclass(frozen=True)
class SlabOutcome:
    seed: int
    E: tuple[bool, ...]
    exclusive: tuple[bool, ...] | None  # None when the frog run was skipped
    cluster_sizes: tuple[int, ...] = ()

    @property
    def implication_holds(self) -> bool:
        if self.exclusive is None:
            return True
        return all(ex for e, ex in zip(self.E, self.exclusive) if e)

    def to_dict(self) -> dict:
        return {"seed": self.seed, "E": list(self.E), "exclusive": None if self.exclusive is None else list(self.exclusive)}


def run_slab_trial(setup: SlabSetup, seed: int, simulate: bool = True, extra_overrides: Mapping | None = None) -> SlabOutcome:
    """Percolation flags E_i on each slab orthant, plus the frog-run cross-check.

    The start sites release their own eta particles at time 0, since each
    corner must hold M+1 particles at its offset 0.
    """
    fld = with_overrides(RandomField(seed, setup.d), extra_overrides or {})
    cfgs = setup.perc_configs()
    clusters = [explore_cluster(fld, c, setup.depth) for c in cfgs]
    E = tuple(c.percolates for c in clusters)
    if not simulate:
        return SlabOutcome(seed, E, None, tuple(len(c) for c in clusters))
    sim = SimConfig(
        d=setup.d,
        type_specs=tuple(TypeSpec(i, p) for i, p in zip(setup.types, setup.laziness)),
        initial_actives=tuple(zip(setup.starts, setup.types)),
        eta_spec=setup.eta_spec,
        horizon=setup.depth,
        seed=seed,
        activate_initial_eta=True,
    )
    record = run(sim, field_access=fld)
    exclusive = []
    for i, cl in zip(setup.types, clusters):
        exclusive.append(all(record.discovery(s) == (a, i) for s, a in cl.members.items()))
    return SlabOutcome(seed, E, tuple(exclusive), tuple(len(c) for c in clusters))


# -- estimates ------------------------------------------------------------------

def _trial_for(setup, forced: bool, seed: int):
    if isinstance(setup, TwoTypeSetup):
        return run_two_type_trial(setup, seed, forced)
    if isinstance(setup, MultiTypeSetup):
        return run_multitype_trial(setup, seed, forced)[0]
    if isinstance(setup, SlabSetup):
        return run_slab_trial(setup, seed)
    raise TypeError(f"unknown setup {type(setup).__name__}")


def coexistence_trials(setup, trials: int, forced: bool, seed: int, workers: int = 1) -> list:
    if trials < 1:
        raise ValueError("need at least one trial")
    return map_trials(TrialPlan(seed, trials, workers=workers), partial(_trial_for, setup, forced))


def summarize(setup, outcomes: Sequence, forced: bool, seed: int, confidence: float = 0.95) -> Estimate:
    """Coexistence frequency of finished trials; counterexamples to the implication are counted too."""
    if not outcomes:
        raise ValueError("need at least one trial")
    if isinstance(setup, SlabSetup):
        hits = sum(all(o.E) for o in outcomes)
    else:
        hits = sum(o.coexist_proxy for o in outcomes)
    bad = sum(not o.implication_holds for o in outcomes)
    return Estimate.from_counts(
        hits, len(outcomes), confidence, seed,
        mode="forced" if forced else "unforced", depth=setup.depth, counterexamples=bad,
    )


def estimate_coexistence_prob(setup, trials: int, forced: bool, seed: int, workers: int = 1, confidence: float = 0.95) -> Estimate:
    """Fraction of trials showing coexistence at depth L, with a Wilson interval.

    ``forced=True`` installs the prefix overrides, so the estimate is of
    percolation-and-ownership given the routed start; ``forced=False`` leaves
    the start to chance. The two are different quantities.
    """
    return summarize(setup, coexistence_trials(setup, trials, forced, seed, workers), forced, seed, confidence)
