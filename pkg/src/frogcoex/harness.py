"""Seeded Monte Carlo trials with Wilson intervals.

Trial ``i`` of a plan always sees seed ``derive_seed(base_seed, i)``, so an
estimate does not depend on worker count or evaluation order.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Any, Callable, Sequence

import numpy as np
from scipy import stats

from .randfield import derive_seed


def wilson_interval(k: int, n: int, confidence: float = 0.95) -> tuple[float, float]:
    if n < 1:
        raise ValueError("Wilson interval needs n >= 1")
    if not 0 <= k <= n:
        raise ValueError(f"need 0 <= k <= n, got k={k}, n={n}")
    if not 0.0 < confidence < 1.0:
        raise ValueError("confidence must lie in (0, 1)")
    z = NormalDist().inv_cdf(0.5 + confidence / 2.0)
    phat = k / n
    z2 = z * z
    denom = 1.0 + z2 / n
    centre = (phat + z2 / (2 * n)) / denom
    half = z * math.sqrt(phat * (1 - phat) / n + z2 / (4 * n * n)) / denom
    lo, hi = centre - half, centre + half
    # pin the endpoints that are exact in closed form
    lo = 0.0 if k == 0 else max(0.0, min(lo, phat))
    hi = 1.0 if k == n else min(1.0, max(hi, phat))
    return lo, hi


def clopper_pearson(k: int, n: int, confidence: float = 0.95) -> tuple[float, float]:
    alpha = 1.0 - confidence
    lo = 0.0 if k == 0 else float(stats.beta.ppf(alpha / 2, k, n - k + 1))
    hi = 1.0 if k == n else float(stats.beta.ppf(1 - alpha / 2, k + 1, n - k))
    return lo, hi


@dataclass(frozen=True)
class Estimate:
    successes: int
    trials: int
    point: float
    wilson_lo: float
    wilson_hi: float
    confidence: float
    seed: int | None = None
    provenance: dict = field(default_factory=dict)

    @classmethod
    def from_counts(cls, k: int, n: int, confidence: float = 0.95, seed: int | None = None, **provenance) -> "Estimate":
        lo, hi = wilson_interval(k, n, confidence)
        return cls(int(k), int(n), k / n, lo, hi, confidence, seed, dict(provenance))

    def overlaps(self, other: "Estimate") -> bool:
        return self.wilson_lo <= other.wilson_hi and other.wilson_lo <= self.wilson_hi

    def to_dict(self) -> dict:
        out = {
            "point": self.point,
            "ci_lo": self.wilson_lo,
            "ci_hi": self.wilson_hi,
            "successes": self.successes,
            "trials": self.trials,
            "confidence": self.confidence,
            "seed": self.seed,
        }
        out.update(self.provenance)
        return out


@dataclass(frozen=True)
class TrialPlan:
    base_seed: int
    trials: int
    confidence: float = 0.95
    workers: int = 1

    def seeds(self) -> list[int]:
        return [derive_seed(self.base_seed, i) for i in range(self.trials)]


def map_trials(plan: TrialPlan, trial: Callable[[int], Any]) -> list[Any]:
    """Evaluate ``trial`` on every derived seed; results come back in trial order.

    With ``workers > 1`` the trial function must be picklable.
    """
    seeds = plan.seeds()
    if plan.workers <= 1 or len(seeds) < 2:
        return [trial(s) for s in seeds]
    chunk = max(1, len(seeds) // (4 * plan.workers))
    with ProcessPoolExecutor(max_workers=plan.workers) as pool:
        return list(pool.map(trial, seeds, chunksize=chunk))


def run_trials(plan: TrialPlan, trial: Callable[[int], bool], **provenance) -> Estimate:
    if plan.trials < 1:
        raise ValueError("a plan needs at least one trial")
    hits = sum(bool(x) for x in map_trials(plan, trial))
    return Estimate.from_counts(hits, plan.trials, plan.confidence, plan.base_seed, **provenance)


@dataclass(frozen=True)
class IndependenceStats:
    correlations: np.ndarray
    max_abs: float
    degenerate: tuple[int, ...]
    n: int

    def bound(self) -> float:
        """The 3/sqrt(n) acceptance bound for this sample size."""
        return 3.0 / math.sqrt(self.n)


def independence_stats(flags: np.ndarray | Sequence[Sequence[bool]]) -> IndependenceStats:
    """Pairwise Pearson correlations between boolean columns.

    Constant columns have no defined correlation; they are reported as 0 and
    listed in ``degenerate`` with a warning.
    """
    x = np.asarray(flags, dtype=float)
    if x.ndim != 2 or x.shape[1] < 2:
        raise ValueError("need a trials x variables matrix with at least 2 variables")
    if x.shape[0] < 30:
        raise ValueError("need at least 30 trials")
    sd = x.std(axis=0)
    degenerate = tuple(int(j) for j in np.nonzero(sd == 0)[0])
    if degenerate:
        warnings.warn(f"constant columns {degenerate}; their correlations are reported as 0", RuntimeWarning)
    xc = x - x.mean(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = (xc.T @ xc) / x.shape[0] / np.outer(sd, sd)
    corr[:, list(degenerate)] = 0.0
    corr[list(degenerate), :] = 0.0
    for j in range(corr.shape[0]):
        if j not in degenerate:
            corr[j, j] = 1.0
    off = corr[~np.eye(corr.shape[0], dtype=bool)]
    return IndependenceStats(corr, float(np.abs(off).max()), degenerate, int(x.shape[0]))
