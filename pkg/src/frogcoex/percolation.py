"""Oriented site percolation on orthants, read off the random field.

A site ``w`` at depth ``a`` of an orthant is open when ``eta(w) >= M`` and the
tuples ``(w, i, ell + a)``, ``i = 1..M+1``, contain, for every free axis ``j``,
one with increment ``theta(j) e_j`` and uniform ``<= p``. The coverage
probability of that second part is ``g(M, p)``; three routes compute it
(grouped multinomial sum, inclusion-exclusion, brute-force enumeration).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import stats

from .harness import Estimate
from .lattice import Orthant, Site, as_site, compositions, pack_sites, unit
from .randfield import EtaSpec, StreamTag, hash_to_uniform, increment_index, key_hash

DEFAULT_DEPTH = 32
BRUTEFORCE_GUARD = 10**7

# Upper bounds used for the oriented site threshold: the level-0.5 crossing
# brackets from estimate_threshold rounded up (d=2: L=64 gave [0.7188, 0.7266];
# d=3: L=32 gave [0.5703, 0.5781]; 1e4 trials, tol 0.01). Finite-size crossing
# points sit above the infinite-volume threshold. d=1 never percolates.
PC_UPPER = {1: 1.0, 2: 0.73, 3: 0.58}


def _check_g_args(M: int, p: float, d: int, n_dirs: int | None) -> int:
    if M < 0:
        raise ValueError("M must be nonnegative")
    if not 0.0 < p <= 1.0:
        raise ValueError(f"p must lie in (0, 1], got {p}")
    if d < 1:
        raise ValueError("d must be at least 1")
    k = d if n_dirs is None else n_dirs
    if not 1 <= k <= d:
        raise ValueError(f"need 1 <= n_dirs <= d, got n_dirs={k}, d={d}")
    return k


@lru_cache(maxsize=None)
def _surjections(s: int, k: int) -> int:
    """Sum of s!/(c_1!..c_k!) over compositions c_i >= 1 of s, i.e. onto maps [s] -> [k].

    Exact integer arithmetic via sum_j (-1)^j C(k, j) (k - j)^s.
    """
    if s < k:
        return 0
    return sum((-1) ** j * math.comb(k, j) * (k - j) ** s for j in range(k + 1))


def g_exact(M: int, p: float, d: int, n_dirs: int | None = None) -> float:
    """Probability that M+1 independent tuples cover all ``n_dirs`` oriented directions.

    Each tuple lands on a given oriented direction with probability p/(2d)
    (increment uniform over 2d, uniform below p) and is "other" otherwise.
    ``n_dirs`` defaults to ``d``; slab orthants use ``d - 1``.

    The multinomial sum is grouped by the number ``s`` of tuples landing on
    some oriented direction: ``s`` is Binomial(M+1, k p/2d), and given ``s``
    the directions are uniform, covering all ``k`` with probability
    surj(s, k) / k^s. Both factors stay well scaled for large M.
    """
    k = _check_g_args(M, p, d, n_dirs)
    n = M + 1
    if n < k:
        return 0.0
    s = np.arange(k, n + 1)
    weights = stats.binom.pmf(s, n, k * p / (2 * d))
    cover = np.array([_surjections(int(v), k) / k ** int(v) for v in s])
    return min(1.0, math.fsum((weights * cover).tolist()))


def g_inclusion_exclusion(M: int, p: float, d: int, n_dirs: int | None = None) -> float:
    """Same probability via sum over subsets S of missed directions of (-1)^|S| (1 - |S| p/2d)^(M+1)."""
    k = _check_g_args(M, p, d, n_dirs)
    q = p / (2 * d)
    return math.fsum((-1) ** j * math.comb(k, j) * (1.0 - j * q) ** (M + 1) for j in range(k + 1))


def g_exact_rational(M: int, p: Fraction, d: int, n_dirs: int | None = None) -> Fraction:
    k = _check_g_args(M, float(p), d, n_dirs)
    q = Fraction(p) / (2 * d)
    return sum(((-1) ** j * math.comb(k, j) * (1 - j * q) ** (M + 1) for j in range(k + 1)), Fraction(0))


def g_lower_bound(M: int, p: float, d: int, n_dirs: int | None = None) -> float:
    """Union bound ``1 - k (1 - p/2d)^(M+1)``; may be negative."""
    k = _check_g_args(M, p, d, n_dirs)
    return 1.0 - k * (1.0 - p / (2 * d)) ** (M + 1)


@lru_cache(maxsize=None)
def _bruteforce_table(M: int, d: int, k: int) -> tuple[int, ...]:
    """Covering outcome counts indexed by number of lazy tuples.

    Each of the M+1 tuples is lazy (weight 1-p) or one of the 2d increments
    (weight p/2d each); the oriented directions are +e_1..+e_k.
    """
    n = M + 1
    outcomes = 2 * d + 1
    if outcomes**n > BRUTEFORCE_GUARD:
        raise ValueError(f"brute force needs {outcomes}^{n} > {BRUTEFORCE_GUARD} outcomes")
    lazy = 2 * d
    targets = [2 * j for j in range(k)]  # +e_j in increment-index order
    grid = np.array(list(itertools.product(range(outcomes), repeat=n)), dtype=np.int64).reshape(-1, n)
    covered = np.ones(grid.shape[0], dtype=bool)
    for t in targets:
        covered &= (grid == t).any(axis=1)
    n_lazy = (grid == lazy).sum(axis=1)
    return tuple(np.bincount(n_lazy[covered], minlength=n + 1).tolist())


def g_bruteforce(M: int, p: float, d: int, n_dirs: int | None = None) -> float:
    """Exact coverage probability by enumerating every per-tuple outcome."""
    k = _check_g_args(M, p, d, n_dirs)
    n = M + 1
    table = _bruteforce_table(M, d, k)
    move = p / (2 * d)
    return math.fsum(c * move ** (n - j) * (1.0 - p) ** j for j, c in enumerate(table) if c)


def smallest_M(p: float, d: int, target: float, n_dirs: int | None = None, scale: float = 1.0, max_M: int = 100_000) -> int:
    """Smallest M with ``scale * g_exact(M, p, d) > target``."""
    k = _check_g_args(0, p, d, n_dirs)
    if scale * 1.0 <= target:
        raise ValueError(f"no M suffices: {scale} * g <= {scale} <= {target}")
    # g is nondecreasing in M; jump with the union bound, then walk back
    lo = k - 1
    M = lo
    step = 1
    while scale * g_exact(M, p, d, k) <= target:
        lo = M + 1
        M += step
        step *= 2
        if M > max_M:
            raise ValueError(f"no M <= {max_M} reaches {target}")
    hi = M
    while lo < hi:
        mid = (lo + hi) // 2
        if scale * g_exact(mid, p, d, k) > target:
            hi = mid
        else:
            lo = mid + 1
    return lo


def min_M_for_supercritical(p: float, d_perc: int, theta_eta: float, pc_upper: float, d_walk: int | None = None) -> int:
    """Smallest M with ``theta_eta * g(M, p) > pc_upper``.

    The walk lives in ``d_walk`` dimensions (default ``d_perc``) and the
    percolation orthant has ``d_perc`` free axes.
    """
    if theta_eta <= pc_upper:
        raise ValueError(f"no M suffices: theta_eta={theta_eta} <= pc_upper={pc_upper} and g <= 1")
    d_walk = d_perc if d_walk is None else d_walk
    return smallest_M(p, d_walk, pc_upper, n_dirs=d_perc, scale=theta_eta)


# -- percolation on the coupled field ---------------------------------------

@dataclass(frozen=True)
class PercConfig:
    M: int
    p: float
    ell: int
    orthant: Orthant
    eta_spec: EtaSpec

    def __post_init__(self) -> None:
        if self.M < 0:
            raise ValueError("M must be nonnegative")
        if not 0.0 < self.p <= 1.0:
            raise ValueError(f"p must lie in (0, 1], got {self.p}")
        if self.ell < 0:
            raise ValueError("ell must be nonnegative")

    @property
    def d(self) -> int:
        return self.orthant.d

    def open_probability(self) -> float:
        return self.eta_spec.prob_at_least(self.M) * g_exact(self.M, self.p, self.d, self.orthant.dim)

    def keys_for(self, site: Sequence[int]) -> list[tuple[Site, int, int]]:
        """The tuple keys whose values decide whether ``site`` is open."""
        a = self.orthant.depth(site)
        s = as_site(site)
        return [(s, i, self.ell + a) for i in range(1, self.M + 2)]


def _target_indices(o: Orthant) -> list[int]:
    return [increment_index(unit(o.d, j, o.direction[j])) for j in o.axes]


def open_mask(field_access, cfg: PercConfig, sites: np.ndarray, depths: np.ndarray | None = None) -> np.ndarray:
    """Vectorized open test for sites already known to lie in the orthant."""
    sites = np.asarray(sites, dtype=np.int64).reshape(-1, cfg.d)
    n = sites.shape[0]
    if not n:
        return np.zeros(0, dtype=bool)
    if depths is None:
        depths = np.array([cfg.orthant.depth(s) for s in sites.tolist()], dtype=np.int64)
    ok = field_access.eta(cfg.eta_spec, sites) >= cfg.M
    slots = cfg.M + 1
    rep_sites = np.repeat(sites, slots, axis=0)
    rep_slots = np.tile(np.arange(1, slots + 1), n)
    rep_times = np.repeat(cfg.ell + depths, slots)
    inc, u = field_access.tuples(rep_sites, rep_slots, rep_times)
    inc = inc.reshape(n, slots)
    hit = (u <= cfg.p).reshape(n, slots)
    for t in _target_indices(cfg.orthant):
        ok &= ((inc == t) & hit).any(axis=1)
    return ok


def is_open(field_access, cfg: PercConfig, w: Sequence[int]) -> bool:
    a = cfg.orthant.depth(w)  # raises outside the orthant
    return bool(open_mask(field_access, cfg, np.array([w]), np.array([a]))[0])


@dataclass
class Cluster:
    members: dict[Site, int] = field(default_factory=dict)
    depth_limit: int = 0
    reached: int = -1  # deepest layer with a member; -1 when empty

    def __len__(self) -> int:
        return len(self.members)

    def layer(self, a: int) -> list[Site]:
        return sorted(s for s, dep in self.members.items() if dep == a)

    @property
    def percolates(self) -> bool:
        return self.reached >= self.depth_limit


def explore_cluster(field_access, cfg: PercConfig, depth_limit: int = DEFAULT_DEPTH) -> Cluster:
    """Oriented breadth-first exploration of the open cluster of the corner."""
    if depth_limit < 0:
        raise ValueError("depth_limit must be nonnegative")
    o = cfg.orthant
    out = Cluster(depth_limit=depth_limit)
    steps = np.array([unit(o.d, j, o.direction[j]) for j in o.axes], dtype=np.int64)
    layer = np.array([o.corner], dtype=np.int64)
    for a in range(depth_limit + 1):
        keep = open_mask(field_access, cfg, layer, np.full(layer.shape[0], a, dtype=np.int64))
        layer = layer[keep]
        if not layer.shape[0]:
            break
        for s in layer.tolist():
            out.members[tuple(s)] = a
        out.reached = a
        if a == depth_limit:
            break
        nxt = (layer[:, None, :] + steps[None, :, :]).reshape(-1, o.d)
        _, first = np.unique(pack_sites(nxt), return_index=True)
        layer = nxt[np.sort(first)]
    return out


def percolates_to_depth(field_access, cfg: PercConfig, depth_limit: int = DEFAULT_DEPTH) -> bool:
    return explore_cluster(field_access, cfg, depth_limit).percolates


# -- abstract Bernoulli oriented percolation --------------------------------

@lru_cache(maxsize=64)
def _layers(dim: int, L: int) -> tuple[tuple[np.ndarray, list[np.ndarray]], ...]:
    """Per layer: step vectors (K, dim) and, for each axis, parent index (or -1)."""
    out = []
    prev_index: dict[tuple[int, ...], int] = {}
    for a in range(L + 1):
        ks = list(compositions(a, dim))
        parents = []
        for j in range(dim):
            idx = []
            for kv in ks:
                if kv[j] == 0:
                    idx.append(-1)
                else:
                    pk = list(kv)
                    pk[j] -= 1
                    idx.append(prev_index[tuple(pk)])
            parents.append(np.array(idx, dtype=np.int64))
        out.append((np.array(ks, dtype=np.int64).reshape(-1, dim), parents))
        prev_index = {kv: i for i, kv in enumerate(ks)}
    return tuple(out)


def crossing_depths(dim: int, q: float, L: int, trials: int, seed: int, first_trial: int = 0, chunk: int = 2000) -> np.ndarray:
    """Deepest reached layer per trial (-1 if the corner is closed), i.i.d. Bernoulli(q) sites.

    The uniform deciding site ``k`` in trial ``t`` is a counter-based function
    of (seed, t, k), so estimates at different q share randomness and the
    result does not depend on chunking.
    """
    layers = _layers(dim, L)
    out = np.empty(trials, dtype=np.int64)
    for start in range(0, trials, chunk):
        tids = np.arange(first_trial + start, first_trial + min(trials, start + chunk), dtype=np.int64)
        nt = tids.shape[0]
        reach = np.ones((nt, 1), dtype=bool)
        deepest = np.full(nt, -1, dtype=np.int64)
        for a, (ks, parents) in enumerate(layers):
            K = ks.shape[0]
            if a == 0:
                fed = np.ones((nt, 1), dtype=bool)
            else:
                fed = np.zeros((nt, K), dtype=bool)
                for par in parents:
                    has = par >= 0
                    fed[:, has] |= reach[:, par[has]]
            live = fed.any(axis=1)
            if not live.any():
                break
            words = np.column_stack([np.repeat(tids, K), np.tile(ks, (nt, 1))])
            u = hash_to_uniform(key_hash(seed, StreamTag.PERC, words)).reshape(nt, K)
            reach = fed & (u < q)
            deepest[reach.any(axis=1)] = a
        out[start:start + nt] = deepest
    return out


def estimate_crossing_prob(d: int, q: float, L: int, trials: int, seed: int, confidence: float = 0.95) -> Estimate:
    """P(the open cluster of the corner reaches depth L), sites open w.p. q."""
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must lie in [0, 1], got {q}")
    if trials < 1:
        raise ValueError("need at least one trial")
    depths = crossing_depths(d, q, L, trials, seed)
    k = int((depths >= L).sum())
    return Estimate.from_counts(k, trials, confidence, seed, d=d, q=q, L=L)


@dataclass
class ThresholdResult:
    lo: float
    hi: float
    d: int
    L: int
    trials: int
    seed: int
    level: float
    evaluations: list[tuple[float, Estimate]]
    widened: bool = False

    def to_dict(self) -> dict:
        return {
            "lo": self.lo,
            "hi": self.hi,
            "d": self.d,
            "L": self.L,
            "trials": self.trials,
            "seed": self.seed,
            "level": self.level,
            "widened": self.widened,
            "evaluations": [{"q": q, **e.to_dict()} for q, e in self.evaluations],
            "note": "finite-size crossing level at depth L, biased relative to the infinite-volume threshold",
        }


def estimate_threshold(d: int, L: int, trials: int, tol: float, seed: int = 0, level: float = 0.5, confidence: float = 0.95) -> ThresholdResult:
    """Bisection on q for crossing probability ``level`` at depth L.

    Every bisection point is evaluated on the same shared uniforms. A point
    whose Wilson interval contains ``level`` cannot be ordered against it; the
    returned interval is widened to cover all such points and flagged.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    lo, hi = 0.0, 1.0
    evals: list[tuple[float, Estimate]] = []
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        est = estimate_crossing_prob(d, mid, L, trials, seed, confidence)
        evals.append((mid, est))
        if est.point >= level:
            hi = mid
        else:
            lo = mid
    widened = False
    for q, est in evals:
        if est.wilson_lo <= level <= est.wilson_hi and not lo <= q <= hi:
            lo, hi = min(lo, q), max(hi, q)
            widened = True
    # shared uniforms make crossing monotone in q; flag if the sample says otherwise
    ordered = sorted(evals, key=lambda qe: qe[0])
    if any(a[1].point > b[1].point for a, b in zip(ordered, ordered[1:])):
        widened = True
    return ThresholdResult(lo, hi, d, L, trials, seed, level, evals, widened)
