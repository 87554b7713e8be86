"""Multi-type lazy frog models on Z^d, their coupling to oriented site percolation,
and finite-depth checks of the coexistence constructions."""

from __future__ import annotations

__version__ = "0.1.0"

from .coupling import (
    EventSpec,
    MultiTypeSetup,
    SlabSetup,
    TrialOutcome,
    TwoTypeSetup,
    build_two_type_events,
    estimate_coexistence_prob,
    run_multitype_trial,
    run_slab_trial,
    run_two_type_trial,
)
from .frog import RunRecord, SimConfig, TieBreak, TypeSpec, run
from .harness import Estimate, TrialPlan, run_trials, wilson_interval
from .lattice import Orthant, build_staircase_path, corner_map, l1_norm
from .percolation import (
    PercConfig,
    estimate_threshold,
    explore_cluster,
    g_bruteforce,
    g_exact,
    g_lower_bound,
    min_M_for_supercritical,
    smallest_M,
)
from .randfield import EtaSpec, RandomField, TupleSample

__all__ = [
    "__version__",
    "EtaSpec", "RandomField", "TupleSample",
    "Orthant", "build_staircase_path", "corner_map", "l1_norm",
    "RunRecord", "SimConfig", "TieBreak", "TypeSpec", "run",
    "PercConfig", "estimate_threshold", "explore_cluster", "g_bruteforce", "g_exact", "g_lower_bound",
    "min_M_for_supercritical", "smallest_M",
    "EventSpec", "MultiTypeSetup", "SlabSetup", "TrialOutcome", "TwoTypeSetup", "build_two_type_events",
    "estimate_coexistence_prob", "run_multitype_trial", "run_slab_trial", "run_two_type_trial",
    "Estimate", "TrialPlan", "run_trials", "wilson_interval",
]
