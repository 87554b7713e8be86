"""Synchronous discrete-time multi-type frog model driven by a :class:`RandomField`.

At time ``t`` the active particles at each site are ordered by persistent id
and the ``j``-th one reads tuple ``(x, j, t)``; a type-``i`` particle jumps by
the increment iff the uniform is ``<= p_i``. Sites first reached at ``t + 1``
release their dormant particles with the discoverer's type; these move from
``t + 1`` on.

Particles live in flat numpy arrays. New particles are appended in order of
(creation time, creation site lexicographic, index), so array position is the
persistent-id order and the per-site slot is just the rank within a stable
sort by site.
"""

from __future__ import annotations

import csv
import gzip
import io
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .lattice import Site, as_site, pack_bits, pack_sites, unpack_sites
from .randfield import EtaSpec, OverrideKey, RandomField, TupleSample, with_overrides


class MemoryGuardError(RuntimeError):
    pass


class TieBreak(str, Enum):
    LOWEST = "low"
    HIGHEST = "high"
    RANDOM = "random"


@dataclass(frozen=True)
class TypeSpec:
    type_index: int
    laziness: float

    def __post_init__(self) -> None:
        if self.type_index < 1:
            raise ValueError("type indices start at 1")
        if not 0.0 < self.laziness <= 1.0:
            raise ValueError(f"laziness must lie in (0, 1], got {self.laziness}")


@dataclass(frozen=True)
class SimConfig:
    d: int
    type_specs: tuple[TypeSpec, ...]
    initial_actives: tuple[tuple[Site, int], ...]
    eta_spec: EtaSpec
    tie_break: TieBreak = TieBreak.LOWEST
    horizon: int = 0
    seed: int = 0
    overrides: Mapping[OverrideKey, TupleSample] | None = None
    record_locations: bool = False
    # the initial sites also hold and release their own eta(x) particles
    activate_initial_eta: bool = False
    max_sites: int = 2_000_000
    max_particles: int = 20_000_000

    def __post_init__(self) -> None:
        object.__setattr__(self, "type_specs", tuple(self.type_specs))
        object.__setattr__(
            self, "initial_actives", tuple((as_site(s), int(i)) for s, i in self.initial_actives)
        )
        object.__setattr__(self, "tie_break", TieBreak(self.tie_break))
        if self.d < 1:
            raise ValueError("dimension must be at least 1")
        if self.horizon < 0:
            raise ValueError("horizon must be nonnegative")
        idx = [t.type_index for t in self.type_specs]
        if len(set(idx)) != len(idx):
            raise ValueError("duplicate type indices")
        sites = [s for s, _ in self.initial_actives]
        if len(set(sites)) != len(sites):
            raise ValueError("initial active sites must be distinct")
        for s, i in self.initial_actives:
            if len(s) != self.d:
                raise ValueError(f"initial site {s} has wrong dimension")
            if i not in idx:
                raise ValueError(f"initial particle has unknown type {i}")

    @property
    def laziness(self) -> dict[int, float]:
        return {t.type_index: t.laziness for t in self.type_specs}

    def to_dict(self) -> dict:
        out = {
            "d": self.d,
            "types": [[t.type_index, t.laziness] for t in self.type_specs],
            "initial_actives": [[list(s), i] for s, i in self.initial_actives],
            "eta": self.eta_spec.to_dict(),
            "tie_break": self.tie_break.value,
            "horizon": self.horizon,
            "seed": self.seed,
            "activate_initial_eta": self.activate_initial_eta,
            "record_locations": self.record_locations,
        }
        if self.overrides:
            out["overrides"] = [
                [list(s), j, t, list(v.increment), v.uniform.hex()]
                for (s, j, t), v in sorted(self.overrides.items())
            ]
        return out


class Particle(NamedTuple):
    created: int
    created_at: Site
    index: int
    type_index: int
    position: Site

    @property
    def id(self) -> tuple[int, Site, int]:
        return (self.created, self.created_at, self.index)


class Discovery(NamedTuple):
    time: int
    type_index: int
    released: int


class SimState:
    """Full model state at one instant. Mutated in place by :func:`step`."""

    def __init__(self, config: SimConfig, field_access=None):
        self.config = config
        self.d = config.d
        base = RandomField(config.seed, config.d)
        self.field = field_access if field_access is not None else with_overrides(base, config.overrides or {})
        self.time = 0
        ntypes = max((t.type_index for t in config.type_specs), default=0) + 1
        self._lazy = np.zeros(ntypes)
        for t in config.type_specs:
            self._lazy[t.type_index] = t.laziness
        self.type_indices = tuple(t.type_index for t in config.type_specs)
        self._half = 1 << (pack_bits(self.d) - 1)

        inits = sorted(config.initial_actives)
        sites = np.array([s for s, _ in inits], dtype=np.int64).reshape(-1, self.d)
        types = np.array([i for _, i in inits], dtype=np.int64)
        if config.activate_initial_eta and len(inits):
            extra = self.field.eta(config.eta_spec, sites)
        else:
            extra = np.zeros(len(inits), dtype=np.int64)
        per_site = 1 + extra
        self.pos = np.repeat(sites, per_site, axis=0)
        self.ptype = np.repeat(types, per_site)
        self.birth_time = np.zeros(self.pos.shape[0], dtype=np.int64)
        self.birth_site = self.pos.copy()
        self.birth_index = _ranks(per_site)
        self._check_range(self.horizon_reach())

        keys = pack_sites(sites) if len(inits) else np.zeros(0, dtype=np.int64)
        self.discovered_keys = np.sort(keys)
        self.discoveries: dict[Site, Discovery] = {
            s: Discovery(0, i, int(x)) for (s, i), x in zip(inits, extra)
        }

    def horizon_reach(self) -> int:
        if not self.pos.shape[0]:
            return 0
        return int(np.abs(self.pos).max()) + self.config.horizon

    def _check_range(self, reach: int) -> None:
        if reach >= self._half:
            raise MemoryGuardError(
                f"coordinates up to {reach} do not fit the {pack_bits(self.d)}-bit site packing for d={self.d}"
            )

    @property
    def n_particles(self) -> int:
        return int(self.pos.shape[0])

    def particles(self) -> list[Particle]:
        return [
            Particle(int(bt), tuple(bs), int(bi), int(tp), tuple(p))
            for bt, bs, bi, tp, p in zip(
                self.birth_time, self.birth_site.tolist(), self.birth_index, self.ptype, self.pos.tolist()
            )
        ]

    def counts(self) -> np.ndarray:
        c = np.bincount(self.ptype, minlength=self._lazy.shape[0])
        return c[list(self.type_indices)]

    def locations(self) -> dict[int, np.ndarray]:
        """Packed keys of occupied sites, per type."""
        keys = pack_sites(self.pos)
        return {i: np.unique(keys[self.ptype == i]) for i in self.type_indices}

    def is_discovered(self, site: Sequence[int]) -> bool:
        return as_site(site) in self.discoveries

    def dormant_count(self, site: Sequence[int]) -> int:
        site = as_site(site)
        if site in self.discoveries:
            return 0
        return self.field.eta_at(self.config.eta_spec, site)

    def slots(self) -> np.ndarray:
        """1-based slot of every particle at its current site."""
        n = self.n_particles
        if not n:
            return np.zeros(0, dtype=np.int64)
        keys = pack_sites(self.pos)
        order = np.argsort(keys, kind="stable")
        sk = keys[order]
        starts = np.empty(n, dtype=bool)
        starts[0] = True
        starts[1:] = sk[1:] != sk[:-1]
        ar = np.arange(n)
        first = np.maximum.accumulate(np.where(starts, ar, 0))
        slots = np.empty(n, dtype=np.int64)
        slots[order] = ar - first + 1
        return slots


def _ranks(counts: np.ndarray) -> np.ndarray:
    """0..c-1 for each entry c of ``counts``, concatenated."""
    counts = np.asarray(counts, dtype=np.int64)
    total = int(counts.sum())
    if not total:
        return np.zeros(0, dtype=np.int64)
    offsets = np.repeat(np.cumsum(counts) - counts, counts)
    return np.arange(total) - offsets


def init_state(config: SimConfig, field_access=None) -> SimState:
    return SimState(config, field_access)


def order_actives_at(state: SimState, site: Sequence[int]) -> list[Particle]:
    """Particles at ``site`` in slot order (slot = list position + 1)."""
    site = np.asarray(as_site(site), dtype=np.int64)
    idx = np.nonzero((state.pos == site).all(axis=1))[0]
    return [
        Particle(
            int(state.birth_time[i]), tuple(state.birth_site[i].tolist()), int(state.birth_index[i]),
            int(state.ptype[i]), tuple(state.pos[i].tolist()),
        )
        for i in idx
    ]


def step(state: SimState) -> SimState:
    t = state.time
    n = state.n_particles
    tie = state.config.tie_break
    if n:
        slots = state.slots()
        inc, u = state.field.tuples(state.pos, slots, np.full(n, t, dtype=np.int64))
        move = u <= state._lazy[state.ptype]
        state.pos = state.pos + state.field.increments(inc) * move[:, None]

        keys = pack_sites(state.pos)
        fresh = ~np.isin(keys, state.discovered_keys)
        if fresh.any():
            _discover(state, keys[fresh], state.ptype[fresh], t + 1, tie)
    state.time = t + 1
    return state


def _discover(state: SimState, keys: np.ndarray, types: np.ndarray, when: int, tie: TieBreak) -> None:
    # distinct (site, type) pairs, sorted by site then type
    o = np.lexsort((types, keys))
    k2, t2 = keys[o], types[o]
    keep = np.empty(k2.shape[0], dtype=bool)
    keep[0] = True
    keep[1:] = (k2[1:] != k2[:-1]) | (t2[1:] != t2[:-1])
    k3, t3 = k2[keep], t2[keep]
    head = np.empty(k3.shape[0], dtype=bool)
    head[0] = True
    head[1:] = k3[1:] != k3[:-1]
    new_keys = k3[head]
    first = np.nonzero(head)[0]
    ntypes = np.diff(np.append(first, k3.shape[0]))
    coords = unpack_sites(new_keys, state.d)
    if tie is TieBreak.LOWEST:
        winner = t3[first]
    elif tie is TieBreak.HIGHEST:
        winner = t3[first + ntypes - 1]
    else:
        u = state.field.tiebreak_uniform(coords, np.full(new_keys.shape[0], when, dtype=np.int64))
        pick = np.minimum((u * ntypes).astype(np.int64), ntypes - 1)
        winner = np.where(ntypes == 1, t3[first], t3[first + pick])

    released = state.field.eta(state.config.eta_spec, coords)
    state.discovered_keys = np.union1d(state.discovered_keys, new_keys)
    for s, w, r in zip(map(tuple, coords.tolist()), winner.tolist(), released.tolist()):
        state.discoveries[s] = Discovery(when, w, r)
    if len(state.discoveries) > state.config.max_sites:
        raise MemoryGuardError(
            f"site table holds {len(state.discoveries)} sites, above the cap of {state.config.max_sites}"
        )
    total = int(released.sum())
    if total:
        if state.n_particles + total > state.config.max_particles:
            raise MemoryGuardError(
                f"{state.n_particles + total} particles would exceed the cap of {state.config.max_particles}"
            )
        state.pos = np.concatenate([state.pos, np.repeat(coords, released, axis=0)])
        state.ptype = np.concatenate([state.ptype, np.repeat(winner, released)])
        state.birth_time = np.concatenate([state.birth_time, np.full(total, when, dtype=np.int64)])
        state.birth_site = np.concatenate([state.birth_site, np.repeat(coords, released, axis=0)])
        state.birth_index = np.concatenate([state.birth_index, _ranks(released)])


@dataclass
class RunRecord:
    config: SimConfig
    type_indices: tuple[int, ...]
    counts: np.ndarray  # (horizon + 1, n_types), columns follow type_indices
    discoveries: dict[Site, Discovery]
    locations: list[dict[int, np.ndarray]] | None = None  # packed keys per time, per type
    final_time: int = 0
    field: object = field(default=None, repr=False, compare=False)

    @property
    def horizon(self) -> int:
        return self.config.horizon

    @property
    def d(self) -> int:
        return self.config.d

    def _col(self, i: int) -> int:
        try:
            return self.type_indices.index(i)
        except ValueError:
            raise KeyError(f"unknown type {i}") from None

    def _check_time(self, n: int) -> None:
        if not 0 <= n <= self.final_time:
            raise IndexError(f"time {n} outside 0..{self.final_time}")

    def active_count(self, n: int, i: int) -> int:
        self._check_time(n)
        return int(self.counts[n, self._col(i)])

    def active_locations(self, n: int, i: int) -> set[Site]:
        self._check_time(n)
        if self.locations is None:
            raise ValueError("run was not recorded with record_locations=True")
        keys = self.locations[n].get(i, np.zeros(0, dtype=np.int64))
        return set(map(tuple, unpack_sites(keys, self.d).tolist()))

    def occupied(self, n: int, i: int) -> np.ndarray:
        """Occupied sites of type ``i`` at time ``n`` as an (K, d) array."""
        self._check_time(n)
        if self.locations is None:
            raise ValueError("run was not recorded with record_locations=True")
        keys = self.locations[n].get(i, np.zeros(0, dtype=np.int64))
        return unpack_sites(keys, self.d)

    def discovery(self, site: Sequence[int]) -> tuple[int, int] | None:
        hit = self.discoveries.get(as_site(site))
        return None if hit is None else (hit.time, hit.type_index)

    def to_dict(self, include_locations: bool = False) -> dict:
        out = {
            "config": self.config.to_dict(),
            "seed": self.config.seed,
            "horizon": self.config.horizon,
            "type_indices": list(self.type_indices),
            "counts": self.counts.tolist(),
            "discoveries": [
                {"site": list(s), "time": v.time, "type": v.type_index, "released": v.released}
                for s, v in sorted(self.discoveries.items(), key=lambda kv: (kv[1].time, kv[0]))
            ],
        }
        if include_locations and self.locations is not None:
            out["locations"] = [
                {str(i): unpack_sites(k, self.d).tolist() for i, k in snap.items()} for snap in self.locations
            ]
        return out

    def to_json(self, include_locations: bool = False) -> str:
        return json.dumps(self.to_dict(include_locations), sort_keys=True, separators=(",", ":"))

    def write_json(self, path: str | Path, include_locations: bool = False) -> None:
        data = self.to_json(include_locations).encode()
        path = Path(path)
        if path.suffix == ".gz":
            # name and mtime left out of the header so the bytes only depend on the record
            with open(path, "wb") as raw, gzip.GzipFile(filename="", fileobj=raw, mode="wb", mtime=0) as fh:
                fh.write(data)
        else:
            path.write_bytes(data)

    def counts_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n"] + [f"type_{i}" for i in self.type_indices])
        for n, row in enumerate(self.counts.tolist()):
            w.writerow([n] + row)
        return buf.getvalue()


def run(config: SimConfig, field_access=None) -> RunRecord:
    """Apply :func:`step` ``config.horizon`` times from the initial state."""
    state = init_state(config, field_access)
    counts = [state.counts()]
    locs = [state.locations()] if config.record_locations else None
    for _ in range(config.horizon):
        step(state)
        counts.append(state.counts())
        if locs is not None:
            locs.append(state.locations())
    return RunRecord(
        config=config,
        type_indices=state.type_indices,
        counts=np.array(counts, dtype=np.int64).reshape(-1, len(state.type_indices)),
        discoveries=dict(state.discoveries),
        locations=locs,
        final_time=state.time,
        field=state.field,
    )


def active_counts(record: RunRecord, n: int, i: int) -> int:
    return record.active_count(n, i)


def active_locations(record: RunRecord, n: int, i: int) -> set[Site]:
    return record.active_locations(n, i)


def discovery(record: RunRecord, site: Sequence[int]) -> tuple[int, int] | None:
    return record.discovery(site)
