"""Counter-based random field of (increment, uniform) tuples.

Every random quantity in a run is a pure function of a 64-bit seed, a stream
tag and an integer key, so any tuple can be looked up in any order. Two types
with different laziness read the very same tuple at a given (site, slot, time),
and the percolation checks read the tuples the simulation consumed.

Key layout (fixed; pinned by ``data/rand_field_vectors.json``)::

    h = mix64(seed ^ TAG[stream])
    for w in key words:             # two's complement, as uint64
        h = mix64((h ^ w) + GOLDEN)
    increment index = mix64(h ^ OUT_INCREMENT) % (2 d)
    uniform         = (mix64(h ^ OUT_UNIFORM) >> 11) * 2**-53

``mix64`` is the splitmix64 finalizer. Tuple keys are
``(x_1, ..., x_d, slot, time)``; eta keys ``(x_1, ..., x_d)``; tie-break keys
``(x_1, ..., x_d, time)``. Increment index ``2j`` is ``+e_j`` and ``2j + 1`` is
``-e_j`` (0-based ``j``).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .lattice import Site, as_site, pack_sites

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
OUT_INCREMENT = 0x243F6A8885A308D3
OUT_UNIFORM = 0x13198A2E03707344
INV_2_53 = 2.0**-53

VECTORS_PATH = Path(__file__).parent / "data" / "rand_field_vectors.json"


class StreamTag(IntEnum):
    TUPLES = 0x5475706C65730001
    ETA = 0x4574610000000002
    TIEBREAK = 0x5469654272000003
    TRIAL = 0x547269616C000004
    PERC = 0x5065726300000005


@dataclass(frozen=True)
class FieldSeed:
    seed: int
    stream_tag: StreamTag = StreamTag.TUPLES

    def __post_init__(self) -> None:
        if not 0 <= self.seed <= MASK64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")


_U = np.uint64


def mix64(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.uint64)
    z = z ^ (z >> _U(30))
    z = z * _U(0xBF58476D1CE4E5B9)
    z = z ^ (z >> _U(27))
    z = z * _U(0x94D049BB133111EB)
    return z ^ (z >> _U(31))


def mix64_int(z: int) -> int:
    """Pure-Python reference for :func:`mix64`."""
    z &= MASK64
    z ^= z >> 30
    z = (z * 0xBF58476D1CE4E5B9) & MASK64
    z ^= z >> 27
    z = (z * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def _as_u64(words: np.ndarray) -> np.ndarray:
    return np.asarray(words, dtype=np.int64).view(np.uint64)


def key_hash(seed: int, tag: int, words: np.ndarray) -> np.ndarray:
    """Hash an (N, W) array of signed key words to N uint64 values."""
    words = np.atleast_2d(np.asarray(words, dtype=np.int64))
    with np.errstate(over="ignore"):
        h = np.full(words.shape[0], mix64_int(seed ^ int(tag)), dtype=np.uint64)
        for col in _as_u64(words).T:
            h = mix64((h ^ col) + _U(GOLDEN))
    return h


def key_hash_int(seed: int, tag: int, words: Sequence[int]) -> int:
    h = mix64_int(seed ^ int(tag))
    for w in words:
        h = mix64_int(((h ^ (int(w) & MASK64)) + GOLDEN) & MASK64)
    return h


def hash_to_uniform(h: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        bits = mix64(h ^ _U(OUT_UNIFORM)) >> _U(11)
    return bits.astype(np.float64) * INV_2_53


def hash_to_index(h: np.ndarray, n: int) -> np.ndarray:
    with np.errstate(over="ignore"):
        return (mix64(h ^ _U(OUT_INCREMENT)) % _U(n)).astype(np.int64)


def derive_seed(base_seed: int, index: int) -> int:
    """Per-trial seed: a counter-based function of (base seed, trial index)."""
    return key_hash_int(base_seed, StreamTag.TRIAL, (index,))


def increment_vectors(d: int) -> np.ndarray:
    """Row ``2j`` is ``+e_j``, row ``2j + 1`` is ``-e_j``."""
    out = np.zeros((2 * d, d), dtype=np.int64)
    for j in range(d):
        out[2 * j, j] = 1
        out[2 * j + 1, j] = -1
    return out


def increment_index(inc: Sequence[int]) -> int:
    inc = as_site(inc)
    nz = [j for j, c in enumerate(inc) if c != 0]
    if len(nz) != 1 or abs(inc[nz[0]]) != 1:
        raise ValueError(f"{inc} is not a unit increment")
    j = nz[0]
    return 2 * j + (0 if inc[j] > 0 else 1)


@dataclass(frozen=True)
class TupleSample:
    increment: Site
    uniform: float

    def __post_init__(self) -> None:
        increment_index(self.increment)
        if not 0.0 <= self.uniform < 1.0:
            raise ValueError(f"uniform must lie in [0, 1), got {self.uniform}")

    @property
    def index(self) -> int:
        return increment_index(self.increment)


@dataclass(frozen=True)
class EtaSpec:
    """Law of the initial dormant count: a constant, or ``m0`` w.p. ``prob`` else ``else_value``."""

    kind: str
    m0: int
    prob: float = 1.0
    else_value: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ("deterministic", "twopoint"):
            raise ValueError(f"unknown eta kind {self.kind!r}")
        if self.m0 < 0 or self.else_value < 0:
            raise ValueError("eta values must be nonnegative")
        if not 0.0 <= self.prob <= 1.0:
            raise ValueError(f"two-point probability must lie in [0, 1], got {self.prob}")

    @classmethod
    def deterministic(cls, m0: int) -> "EtaSpec":
        return cls("deterministic", int(m0))

    @classmethod
    def two_point(cls, m0: int, prob: float, else_value: int = 0) -> "EtaSpec":
        return cls("twopoint", int(m0), float(prob), int(else_value))

    @property
    def max_value(self) -> int:
        if self.kind == "deterministic":
            return self.m0
        return max(self.m0, self.else_value)

    def prob_at_least(self, M: int) -> float:
        if self.kind == "deterministic":
            return 1.0 if self.m0 >= M else 0.0
        return self.prob * (self.m0 >= M) + (1.0 - self.prob) * (self.else_value >= M)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "m0": self.m0, "prob": self.prob, "else_value": self.else_value}


class RandomField:
    """Seed-keyed field over (site, slot, time), plus eta and tie-break streams."""

    def __init__(self, seed: int, d: int):
        if d < 1:
            raise ValueError("dimension must be at least 1")
        FieldSeed(seed)
        self.seed = int(seed)
        self.d = int(d)
        self._inc = increment_vectors(d)

    @property
    def base(self) -> "RandomField":
        return self

    def tuples(self, sites: np.ndarray, slots: np.ndarray, times: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized lookup; returns (increment index, uniform) arrays."""
        sites = np.asarray(sites, dtype=np.int64).reshape(-1, self.d)
        slots = np.asarray(slots, dtype=np.int64).reshape(-1)
        times = np.asarray(times, dtype=np.int64).reshape(-1)
        if slots.size and slots.min() < 1:
            raise ValueError("slots are 1-based")
        words = np.column_stack([sites, slots, times])
        h = key_hash(self.seed, StreamTag.TUPLES, words)
        return hash_to_index(h, 2 * self.d), hash_to_uniform(h)

    def tuple_at(self, site: Sequence[int], slot: int, time: int) -> TupleSample:
        idx, u = self.tuples(np.array([site]), np.array([slot]), np.array([time]))
        return TupleSample(tuple(int(c) for c in self._inc[idx[0]]), float(u[0]))

    def increments(self, idx: np.ndarray) -> np.ndarray:
        return self._inc[idx]

    def eta(self, spec: EtaSpec, sites: np.ndarray) -> np.ndarray:
        sites = np.asarray(sites, dtype=np.int64).reshape(-1, self.d)
        if spec.kind == "deterministic":
            return np.full(sites.shape[0], spec.m0, dtype=np.int64)
        u = hash_to_uniform(key_hash(self.seed, StreamTag.ETA, sites))
        return np.where(u < spec.prob, spec.m0, spec.else_value).astype(np.int64)

    def eta_at(self, spec: EtaSpec, site: Sequence[int]) -> int:
        return int(self.eta(spec, np.array([site]))[0])

    def tiebreak_uniform(self, sites: np.ndarray, times: np.ndarray) -> np.ndarray:
        sites = np.asarray(sites, dtype=np.int64).reshape(-1, self.d)
        words = np.column_stack([sites, np.asarray(times, dtype=np.int64).reshape(-1)])
        return hash_to_uniform(key_hash(self.seed, StreamTag.TIEBREAK, words))


def sample_tuple(seed: FieldSeed, d: int, site: Sequence[int], slot: int, time: int) -> TupleSample:
    if seed.stream_tag != StreamTag.TUPLES:
        raise ValueError("sample_tuple needs the TUPLES stream")
    if slot < 1:
        raise ValueError("slots are 1-based")
    return RandomField(seed.seed, d).tuple_at(site, slot, time)


def sample_eta(seed: FieldSeed, spec: EtaSpec, site: Sequence[int]) -> int:
    if seed.stream_tag != StreamTag.ETA:
        raise ValueError("sample_eta needs the ETA stream")
    return RandomField(seed.seed, len(site)).eta_at(spec, site)


OverrideKey = tuple[Site, int, int]


class OverriddenField:
    """A field whose lookups at finitely many keys return forced tuples."""

    def __init__(self, base: "RandomField | OverriddenField", overrides: Mapping[OverrideKey, TupleSample]):
        self._base = base
        self.d = base.d
        self.seed = base.seed
        self.overrides: dict[OverrideKey, TupleSample] = {}
        for (site, slot, time), sample in overrides.items():
            site = as_site(site)
            if len(site) != self.d or len(sample.increment) != self.d:
                raise ValueError("override dimension mismatch")
            if slot < 1:
                raise ValueError("slots are 1-based")
            self.overrides[(site, int(slot), int(time))] = sample
        # per time: packed sites present, and a dict for exact lookup
        self._by_time: dict[int, dict[tuple[int, int], tuple[int, float]]] = {}
        self._sites_by_time: dict[int, np.ndarray] = {}
        grouped: dict[int, list] = {}
        for (site, slot, time), sample in self.overrides.items():
            grouped.setdefault(time, []).append((site, slot, sample))
        for time, rows in grouped.items():
            packed = pack_sites(np.array([r[0] for r in rows], dtype=np.int64))
            self._sites_by_time[time] = np.unique(packed)
            self._by_time[time] = {
                (int(k), slot): (sample.index, sample.uniform)
                for k, (_, slot, sample) in zip(packed, rows)
            }

    @property
    def base(self) -> RandomField:
        return self._base.base

    def tuples(self, sites: np.ndarray, slots: np.ndarray, times: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        sites = np.asarray(sites, dtype=np.int64).reshape(-1, self.d)
        slots = np.asarray(slots, dtype=np.int64).reshape(-1)
        times = np.asarray(times, dtype=np.int64).reshape(-1)
        idx, u = self._base.tuples(sites, slots, times)
        if not self._by_time or not sites.shape[0]:
            return idx, u
        idx, u = idx.copy(), u.copy()
        present = [t for t in np.unique(times).tolist() if t in self._by_time]
        if not present:
            return idx, u
        packed = pack_sites(sites)
        for t in present:
            rows = np.nonzero((times == t) & np.isin(packed, self._sites_by_time[t]))[0]
            table = self._by_time[t]
            for r in rows.tolist():
                hit = table.get((int(packed[r]), int(slots[r])))
                if hit is not None:
                    idx[r], u[r] = hit
        return idx, u

    def tuple_at(self, site: Sequence[int], slot: int, time: int) -> TupleSample:
        hit = self.overrides.get((as_site(site), int(slot), int(time)))
        if hit is not None:
            return hit
        return self._base.tuple_at(site, slot, time)

    def increments(self, idx: np.ndarray) -> np.ndarray:
        return self._base.increments(idx)

    def eta(self, spec: EtaSpec, sites: np.ndarray) -> np.ndarray:
        return self._base.eta(spec, sites)

    def eta_at(self, spec: EtaSpec, site: Sequence[int]) -> int:
        return self._base.eta_at(spec, site)

    def tiebreak_uniform(self, sites: np.ndarray, times: np.ndarray) -> np.ndarray:
        return self._base.tiebreak_uniform(sites, times)


def with_overrides(base: "RandomField | OverriddenField", ov: Mapping[OverrideKey, TupleSample]) -> "RandomField | OverriddenField":
    if not ov:
        return base
    return OverriddenField(base, ov)


class RecordingField:
    """Pass-through wrapper that remembers every tuple key it was asked for."""

    def __init__(self, inner: "RandomField | OverriddenField | RecordingField"):
        self._inner = inner
        self.d = inner.d
        self.seed = inner.seed
        self.keys: set[OverrideKey] = set()

    @property
    def base(self) -> RandomField:
        return self._inner.base

    def tuples(self, sites: np.ndarray, slots: np.ndarray, times: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        sites = np.asarray(sites, dtype=np.int64).reshape(-1, self.d)
        slots = np.asarray(slots, dtype=np.int64).reshape(-1)
        times = np.asarray(times, dtype=np.int64).reshape(-1)
        for s, j, t in zip(map(tuple, sites.tolist()), slots.tolist(), times.tolist()):
            self.keys.add((s, j, t))
        return self._inner.tuples(sites, slots, times)

    def tuple_at(self, site: Sequence[int], slot: int, time: int) -> TupleSample:
        self.keys.add((as_site(site), int(slot), int(time)))
        return self._inner.tuple_at(site, slot, time)

    def increments(self, idx: np.ndarray) -> np.ndarray:
        return self._inner.increments(idx)

    def eta(self, spec: EtaSpec, sites: np.ndarray) -> np.ndarray:
        return self._inner.eta(spec, sites)

    def eta_at(self, spec: EtaSpec, site: Sequence[int]) -> int:
        return self._inner.eta_at(spec, site)

    def tiebreak_uniform(self, sites: np.ndarray, times: np.ndarray) -> np.ndarray:
        return self._inner.tiebreak_uniform(sites, times)


# -- test vectors -----------------------------------------------------------

def _vector_cases() -> Iterable[tuple[int, StreamTag, tuple[int, ...]]]:
    for seed in (0, 1, 42, 0xDEADBEEFCAFEF00D, MASK64):
        for tag in StreamTag:
            for words in ((), (0,), (0, 0, 1, 0), (-1, 2, 3, 7), (5, -5, 1, 1, 12)):
                yield seed, tag, words


def generate_test_vectors() -> dict:
    hashes = [
        {"seed": s, "stream": t.name, "words": list(w), "out": f"{key_hash_int(s, t, w):016x}"}
        for s, t, w in _vector_cases()
    ]
    samples = []
    for seed, d, site, slot, time in [(0, 1, (0,), 1, 0), (7, 2, (0, 0), 1, 0), (7, 2, (3, -2), 4, 9), (2024, 3, (1, -1, 2), 13, 40)]:
        ts = RandomField(seed, d).tuple_at(site, slot, time)
        samples.append({
            "seed": seed, "d": d, "site": list(site), "slot": slot, "time": time,
            "increment": list(ts.increment), "uniform": ts.uniform.hex(),
        })
    return {"layout": "h=mix64(seed^TAG); h=mix64((h^w)+GOLDEN) per word", "hashes": hashes, "tuples": samples}


def check_test_vectors(path: str | Path = VECTORS_PATH) -> list[str]:
    """Compare the generator against a vector file; returns mismatch descriptions."""
    try:
        data = json.loads(Path(path).read_text())
        problems = []
        for row in data["hashes"]:
            tag = StreamTag[row["stream"]]
            words = tuple(row["words"])
            got_int = key_hash_int(row["seed"], tag, words)
            got_vec = int(key_hash(row["seed"], tag, np.array([words], dtype=np.int64).reshape(1, -1))[0]) if words else got_int
            want = int(row["out"], 16)
            if got_int != want or got_vec != want:
                problems.append(f"hash {row['seed']}/{row['stream']}/{words}: got {got_int:016x}, want {want:016x}")
        for row in data["tuples"]:
            ts = RandomField(row["seed"], row["d"]).tuple_at(row["site"], row["slot"], row["time"])
            if list(ts.increment) != row["increment"] or ts.uniform != float.fromhex(row["uniform"]):
                problems.append(f"tuple {row}: got {ts}")
        if not data["hashes"] or not data["tuples"]:
            problems.append("vector file has no cases")
        return problems
    except (OSError, KeyError, ValueError, TypeError) as exc:
        return [f"unreadable vector file {path}: {exc}"]
