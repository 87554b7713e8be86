"""Integer lattice geometry: sites, L1 norms, orthants and staircase paths.

Sites are plain tuples of Python ints. Everything here is pure and cheap; the
simulation engine works on numpy arrays and only calls into this module when
building setups or checking results.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from math import comb
from typing import Iterator, Sequence

import numpy as np

Site = tuple[int, ...]


class LatticeError(ValueError):
    pass


def as_site(coords: Sequence[int]) -> Site:
    return tuple(int(c) for c in coords)


def _check_dims(a: Sequence[int], b: Sequence[int]) -> None:
    if len(a) != len(b):
        raise LatticeError(f"dimension mismatch: {len(a)} vs {len(b)}")
    if len(a) < 1:
        raise LatticeError("dimension must be at least 1")


def l1_norm(a: Sequence[int], b: Sequence[int] | None = None) -> int:
    """L1 distance between ``a`` and ``b`` (or the norm of ``a`` if ``b`` is None)."""
    if b is None:
        b = (0,) * len(a)
    _check_dims(a, b)
    return sum(abs(int(x) - int(y)) for x, y in zip(a, b))


def unit(d: int, j: int, sign: int = 1) -> Site:
    return tuple(sign if i == j else 0 for i in range(d))


def add(a: Sequence[int], b: Sequence[int]) -> Site:
    _check_dims(a, b)
    return tuple(int(x) + int(y) for x, y in zip(a, b))


def scaled_corner(m: int, theta: Sequence[int]) -> Site:
    return tuple(m * int(t) for t in theta)


@dataclass(frozen=True)
class Orthant:
    """The set ``corner + sum_j k_j * direction[j] * e_j`` with all ``k_j >= 0``.

    Axes listed in ``frozen`` do not extend: members agree with the corner in
    those coordinates. This gives the lower-dimensional slab orthants that live
    inside a hyperplane ``x(j) = const``.
    """

    corner: Site
    direction: tuple[int, ...]
    frozen: tuple[int, ...] = field(default=())

    def __post_init__(self) -> None:
        object.__setattr__(self, "corner", as_site(self.corner))
        object.__setattr__(self, "direction", tuple(int(t) for t in self.direction))
        object.__setattr__(self, "frozen", tuple(sorted(int(j) for j in self.frozen)))
        _check_dims(self.corner, self.direction)
        if any(t not in (1, -1) for t in self.direction):
            raise LatticeError(f"direction entries must be +1 or -1, got {self.direction}")
        if any(not 0 <= j < self.d for j in self.frozen):
            raise LatticeError(f"frozen axes {self.frozen} out of range for d={self.d}")
        if len(self.frozen) == self.d:
            raise LatticeError("an orthant needs at least one free axis")

    @property
    def d(self) -> int:
        return len(self.corner)

    @property
    def axes(self) -> tuple[int, ...]:
        """Free axes, in coordinate order."""
        return tuple(j for j in range(self.d) if j not in self.frozen)

    @property
    def dim(self) -> int:
        return len(self.axes)

    def depth_vector(self, s: Sequence[int]) -> tuple[int, ...] | None:
        """The steps ``k_j`` along the free axes, or None if ``s`` is outside."""
        _check_dims(self.corner, s)
        ks = []
        for j in range(self.d):
            delta = (int(s[j]) - self.corner[j]) * self.direction[j]
            if j in self.frozen:
                if delta != 0:
                    return None
                continue
            if delta < 0:
                return None
            ks.append(delta)
        return tuple(ks)

    def contains(self, s: Sequence[int]) -> bool:
        return self.depth_vector(s) is not None

    def depth(self, s: Sequence[int]) -> int:
        ks = self.depth_vector(s)
        if ks is None:
            raise LatticeError(f"site {tuple(s)} is outside the orthant at {self.corner}")
        return sum(ks)

    def neighbors(self, s: Sequence[int]) -> list[Site]:
        if not self.contains(s):
            raise LatticeError(f"site {tuple(s)} is outside the orthant at {self.corner}")
        s = as_site(s)
        return [add(s, unit(self.d, j, self.direction[j])) for j in self.axes]

    def site_from_depths(self, ks: Sequence[int]) -> Site:
        out = list(self.corner)
        for j, k in zip(self.axes, ks):
            out[j] += self.direction[j] * int(k)
        return tuple(out)

    def layer(self, a: int) -> Iterator[Site]:
        """All sites at depth ``a``, in lexicographic order of the step vector."""
        for ks in compositions(a, self.dim):
            yield self.site_from_depths(ks)

    def layer_size(self, a: int) -> int:
        return comb(a + self.dim - 1, self.dim - 1)


def orthant_contains(o: Orthant, s: Sequence[int]) -> bool:
    return o.contains(s)


def orthant_depth(o: Orthant, s: Sequence[int]) -> int:
    return o.depth(s)


def oriented_neighbors(o: Orthant, s: Sequence[int]) -> list[Site]:
    return o.neighbors(s)


def compositions(total: int, parts: int) -> Iterator[tuple[int, ...]]:
    """Weak compositions of ``total`` into ``parts`` nonnegative parts, lexicographic."""
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in compositions(total - first, parts - 1):
            yield (first,) + rest


def slab_orthant(corner: Sequence[int]) -> Orthant:
    """Positive orthant over the first d-1 axes inside the hyperplane through ``corner``."""
    corner = as_site(corner)
    d = len(corner)
    return Orthant(corner, (1,) * d, frozen=(d - 1,))


@dataclass(frozen=True)
class LatticePath:
    sites: tuple[Site, ...]

    def __post_init__(self) -> None:
        if not self.sites:
            raise LatticeError("a path needs at least one site")
        for a, b in zip(self.sites, self.sites[1:]):
            if l1_norm(a, b) != 1:
                raise LatticeError(f"non-adjacent consecutive sites {a} -> {b}")

    def __len__(self) -> int:
        return len(self.sites) - 1

    def __getitem__(self, i: int) -> Site:
        return self.sites[i]

    @property
    def start(self) -> Site:
        return self.sites[0]

    @property
    def end(self) -> Site:
        return self.sites[-1]


def build_staircase_path(start: Sequence[int], end: Sequence[int], strict_bound: int) -> LatticePath:
    """Shortest path from ``start`` to ``end`` whose non-final sites have norm < ``strict_bound``.

    Steps that move a coordinate toward zero are taken first, then the
    remaining steps in coordinate order, so the norm dips and then climbs by
    one per step. The climbing phase ends exactly at ``end``, which means the
    largest non-final norm is ``max(|start|, |end| - 1)``. That is the best any
    path can do, so failure here means no valid path exists.
    """
    start, end = as_site(start), as_site(end)
    _check_dims(start, end)
    if strict_bound < 1:
        raise LatticeError("strict_bound must be positive")
    if start == end:
        return LatticePath((start,))
    if l1_norm(start) >= strict_bound:
        raise LatticeError(
            f"start {start} has norm {l1_norm(start)}, not below strict_bound {strict_bound}"
        )
    if l1_norm(end) > strict_bound:
        raise LatticeError(
            f"end {end} has norm {l1_norm(end)} > strict_bound {strict_bound}; "
            "the site before it cannot stay below the bound"
        )
    cur = list(start)
    sites = [tuple(cur)]

    def step(j: int) -> None:
        cur[j] += 1 if end[j] > cur[j] else -1
        sites.append(tuple(cur))

    # shrinking phase: coordinates whose target lies on the other side of zero
    # (or closer to zero) move toward zero first
    for j in range(len(cur)):
        while cur[j] != end[j] and abs(cur[j] + (1 if end[j] > cur[j] else -1)) < abs(cur[j]):
            step(j)
    for j in range(len(cur)):
        while cur[j] != end[j]:
            step(j)
    path = LatticePath(tuple(sites))
    check_staircase(path, start, end, strict_bound)
    return path


def check_staircase(path: LatticePath, start: Site, end: Site, strict_bound: int) -> None:
    """Raise unless ``path`` is a shortest start->end path respecting the norm bound."""
    if path.start != start or path.end != end:
        raise LatticeError("path endpoints do not match")
    if len(path) != l1_norm(start, end):
        raise LatticeError(f"path length {len(path)} != {l1_norm(start, end)}")
    for s in path.sites[:-1]:
        if l1_norm(s) >= strict_bound:
            raise LatticeError(f"site {s} has norm {l1_norm(s)} >= {strict_bound}")


@dataclass(frozen=True)
class CornerAssignment:
    point: Site
    theta: tuple[int, ...]
    corner: Site
    k: int


def corner_map(points: Sequence[Sequence[int]], m: int) -> list[CornerAssignment]:
    """Match 2^d start points to the scaled corners ``m * theta``.

    Points sorted lexicographically are paired with corners sorted
    lexicographically. Returned in the caller's point order.
    """
    pts = [as_site(p) for p in points]
    if not pts:
        raise LatticeError("need at least one point")
    d = len(pts[0])
    if any(len(p) != d for p in pts):
        raise LatticeError("points have mixed dimensions")
    if len(pts) != 2**d:
        raise LatticeError(f"need exactly 2^d = {2**d} points, got {len(pts)}")
    if len(set(pts)) != len(pts):
        raise LatticeError("points must be distinct")
    if m < 1:
        raise LatticeError("m must be positive")
    for p in pts:
        if l1_norm(p) > m:
            raise LatticeError(f"point {p} has norm {l1_norm(p)} > m = {m}")
    thetas = sorted(itertools.product((-1, 1), repeat=d))
    match = dict(zip(sorted(pts), thetas))
    out = []
    for p in pts:
        theta = match[p]
        corner = scaled_corner(m, theta)
        out.append(CornerAssignment(p, theta, corner, l1_norm(p, corner)))
    return out


def pack_bits(d: int) -> int:
    return 63 // d


def pack_sites(sites: np.ndarray) -> np.ndarray:
    """Pack an (N, d) integer array into sortable int64 keys.

    Packing is order-preserving: sorting keys sorts sites lexicographically.
    Raises OverflowError when a coordinate does not fit, never wraps.
    """
    sites = np.asarray(sites, dtype=np.int64)
    if sites.ndim != 2:
        raise LatticeError("expected an (N, d) array of sites")
    d = sites.shape[1]
    bits = pack_bits(d)
    half = 1 << (bits - 1)
    if sites.size and (sites.min() < -half or sites.max() >= half):
        raise OverflowError(f"coordinates exceed +-{half} packing range for d={d}")
    out = np.zeros(sites.shape[0], dtype=np.int64)
    for j in range(d):
        out = (out << bits) | (sites[:, j] + half)
    return out


def unpack_sites(keys: np.ndarray, d: int) -> np.ndarray:
    keys = np.asarray(keys, dtype=np.int64)
    bits = pack_bits(d)
    half = 1 << (bits - 1)
    mask = (1 << bits) - 1
    out = np.empty((keys.shape[0], d), dtype=np.int64)
    for j in range(d - 1, -1, -1):
        out[:, j] = (keys & mask) - half
        keys = keys >> bits
    return out
