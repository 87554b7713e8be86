from __future__ import annotations

from dataclasses import replace

import pytest

from frogcoex.coupling import (
    MultiTypeSetup,
    SetupError,
    SlabSetup,
    TwoTypeSetup,
    build_multitype_events,
    build_two_type_events,
    check_blocking,
    check_diagonal_activation,
    consumed_keys,
    estimate_coexistence_prob,
    force_closed_overrides,
    force_open_overrides,
    run_multitype_trial,
    run_slab_trial,
    run_two_type_trial,
    two_type_config,
    two_type_paths,
)
from frogcoex.frog import TieBreak, run
from frogcoex.lattice import l1_norm
from frogcoex.percolation import PC_UPPER, g_exact, min_M_for_supercritical
from frogcoex.randfield import EtaSpec, TupleSample


@pytest.fixture(scope="module")
def setup():
    return TwoTypeSetup(d=2, y=(1, 0), p1=1.0, p2=0.6, m=1, depth=12)


def test_two_type_geometry(setup):
    spec = build_two_type_events(setup)
    pi1, pi2 = spec.paths
    assert len(pi1) == 2 and len(pi2) == 3
    assert setup.k == l1_norm((1, 0), (-1, -1)) == 3
    assert [o.corner for o in spec.orthants] == [(1, 1), (-1, -1)]
    assert spec.offsets == (2, 3)
    for path in spec.paths:
        assert all(l1_norm(s) < setup.md for s in path.sites[:-1])
    # default M is the smallest supercritical one
    assert setup.M == min_M_for_supercritical(0.6, 2, 1.0, PC_UPPER[2])


def test_trivial_second_path():
    pi1, pi2 = two_type_paths(2, (-1, -1), 1)
    assert len(pi2) == 0 and len(pi1) == 2


def test_override_count_bound(setup):
    spec = build_two_type_events(setup)
    Mp = setup.eta_spec.max_value
    md, k = setup.md, setup.k
    assert len(spec.overrides) <= (1 + Mp * max(k, md)) * (md + k)


def test_setup_invariants():
    with pytest.raises(SetupError):
        TwoTypeSetup(d=2, y=(2, 1), m=1)
    with pytest.raises(SetupError):
        TwoTypeSetup(d=1, y=(1,), m=1)
    with pytest.raises(SetupError, match="does not exceed"):
        TwoTypeSetup(d=2, y=(1, 0), m=1, M=4)
    s = TwoTypeSetup(d=2, y=(1, 0), m=1, M=4, require_supercritical=False)
    assert s.M == 4


def test_forced_trial_flags(setup):
    o = run_two_type_trial(setup, 3)
    assert o.a12_forced_or_observed
    assert o.implication_holds
    assert o.types == (1, 2) and len(o.final_counts) == 2
    d = o.to_dict()
    assert set(d) >= {"a12_forced_or_observed", "percolates", "blocking_ok", "diagonal_timing_ok", "coexist_proxy", "seed"}


def test_all_forced_open(setup):
    spec = build_two_type_events(setup)
    ov = {}
    for cfg in spec.perc:
        ov.update(force_open_overrides(cfg, setup.depth))
    o = run_two_type_trial(setup, 1, extra_overrides=ov)
    assert o.a12 and all(o.percolates) and o.blocking_ok and o.diagonal_timing_ok and o.coexist_proxy


def test_corner_forced_closed(setup):
    spec = build_two_type_events(setup)
    ov = force_closed_overrides(spec.perc[0], spec.orthants[0].corner)
    o = run_two_type_trial(setup, 2, extra_overrides=ov)
    assert not o.a3_to_depth_L
    assert not o.coexist_proxy
    assert o.implication_holds


def test_implication_over_seeds(setup):
    outs = [run_two_type_trial(setup, s) for s in range(25)]
    assert all(o.implication_holds for o in outs)
    assert any(o.premise for o in outs)


@pytest.mark.parametrize("tie", [TieBreak.HIGHEST, TieBreak.RANDOM])
def test_tie_break_flag_equality(setup, tie):
    other = replace(setup, tie_break=tie)
    for s in range(8):
        assert run_two_type_trial(setup, s).flags() == run_two_type_trial(other, s).flags()


def test_blocking_detects_intruder(setup):
    spec = build_two_type_events(setup)
    # unforced run where the type-2 particle steps from (1,0) onto corner (1,1) at time 1
    ov = {((1, 0), 1, 0): TupleSample((0, 1), 0.0)}
    rec = run(two_type_config(setup, 0, ov))
    assert not check_blocking(rec, spec, setup.depth)


def test_blocking_vacuous_before_reach(setup):
    spec = build_two_type_events(setup)
    rec = run(replace(two_type_config(setup, 0, spec.overrides), horizon=1, record_locations=True))
    assert check_blocking(rec, spec, setup.depth)


def test_diagonal_vacuous_when_closed(setup):
    spec = build_two_type_events(setup)
    ov = dict(spec.overrides)
    for cfg in spec.perc:
        ov.update(force_closed_overrides(cfg, cfg.orthant.corner))
    rec = run(two_type_config(setup, 4, ov))
    assert check_diagonal_activation(rec, spec, setup.depth)


def test_corner_discovered_at_offset(setup):
    spec = build_two_type_events(setup)
    rec = run(two_type_config(setup, 5, spec.overrides))
    assert rec.discovery((1, 1)) == (setup.md, 1)
    assert rec.discovery((-1, -1)) == (setup.k, 2)


def test_two_point_regime_and_subcritical():
    sup = TwoTypeSetup(p1=1.0, p2=0.6, m=1, M=20, eta_spec=EtaSpec.two_point(20, 0.85), depth=10)
    assert 0.85 * g_exact(20, 0.6, 2) > PC_UPPER[2]
    e = estimate_coexistence_prob(sup, 40, True, 1)
    assert e.successes > 0 and e.provenance["counterexamples"] == 0
    sub = TwoTypeSetup(p1=1.0, p2=0.6, m=1, M=20, eta_spec=EtaSpec.two_point(20, 0.3), depth=10, require_supercritical=False)
    e = estimate_coexistence_prob(sub, 40, True, 1)
    assert e.point < 0.1


def test_estimate_errors_and_modes(setup):
    with pytest.raises(ValueError):
        estimate_coexistence_prob(setup, 0, True, 1)
    f = estimate_coexistence_prob(setup, 10, True, 7)
    u = estimate_coexistence_prob(setup, 10, False, 7)
    assert f.provenance["mode"] == "forced" and u.provenance["mode"] == "unforced"


@pytest.fixture(scope="module")
def multi():
    return MultiTypeSetup(2, ((0, 0), (1, 0), (0, 1), (1, 1)), (1.0, 0.8, 0.6, 0.5), m=2, depth=8)


def test_multitype_geometry(multi):
    spec = build_multitype_events(multi)
    for path, cfg in zip(spec.paths, spec.perc):
        assert path.end == cfg.orthant.corner
        assert len(path) == cfg.ell
        assert all(l1_norm(s) < multi.m * multi.d for s in path.sites[:-1])
    assert len({o.corner for o in spec.orthants}) == 4


def test_multitype_rejections():
    with pytest.raises(SetupError):
        MultiTypeSetup(1, ((0,), (1,)), (1.0, 1.0), m=1)
    with pytest.raises(SetupError, match="2\\^d = 4"):
        MultiTypeSetup(2, ((0, 0), (1, 0), (0, 1)), (1.0, 1.0, 1.0), m=2)
    with pytest.raises(SetupError):
        MultiTypeSetup(2, ((0, 0), (3, 0), (0, 1), (1, 1)), (1.0,) * 4, m=2)


def test_multitype_forced_open(multi):
    spec = build_multitype_events(multi)
    ov = {}
    for cfg in spec.perc:
        ov.update(force_open_overrides(cfg, multi.depth))
    out, rec, _ = run_multitype_trial(multi, 3, extra_overrides=ov)
    assert all(out.percolates) and all(out.owned) and out.blocking_ok and out.diagonal_timing_ok


def test_multitype_one_corner_closed(multi):
    spec = build_multitype_events(multi)
    ov = force_closed_overrides(spec.perc[2], spec.orthants[2].corner)
    base, _, _ = run_multitype_trial(multi, 6)
    closed, _, _ = run_multitype_trial(multi, 6, extra_overrides=ov)
    assert not closed.percolates[2]
    for i in (0, 1, 3):
        assert closed.percolates[i] == base.percolates[i]


def test_multitype_keys_disjoint(multi):
    for s in range(3):
        out, rec, spec = run_multitype_trial(multi, s)
        assert out.implication_holds
        keys = consumed_keys(rec.field, spec, multi.depth)
        for i in range(4):
            for j in range(i + 1, 4):
                assert not keys[i] & keys[j]


def test_two_type_keys_disjoint(setup):
    spec = build_two_type_events(setup)
    rec = run(two_type_config(setup, 0, spec.overrides))
    a, b = consumed_keys(rec.field, spec, setup.depth)
    assert a and b and not a & b


def test_slab_rejections():
    with pytest.raises(SetupError, match="requires d ≥ 3"):
        SlabSetup(d=2)
    with pytest.raises(SetupError):
        SlabSetup(d=3, heights=(0, 0, 1))


def test_slab_geometry():
    s = SlabSetup(d=3, heights=tuple(range(8)), laziness=tuple(1.0 - 0.05 * i for i in range(8)))
    assert s.p0 == pytest.approx(0.65)
    starts = s.starts
    assert all(x[:2] == starts[0][:2] for x in starts)
    assert len({x[2] for x in starts}) == 8
    for cfg in s.perc_configs():
        assert cfg.ell == 0 and cfg.orthant.dim == 2
    assert s.open_probability() > PC_UPPER[2]


def test_slab_forced_open():
    s = SlabSetup(d=3, heights=tuple(range(8)), depth=5)
    ov = {}
    for cfg in s.perc_configs():
        ov.update(force_open_overrides(cfg, s.depth))
    out = run_slab_trial(s, 0, extra_overrides=ov)
    assert all(out.E) and all(out.exclusive)


def test_slab_exclusive_on_success():
    s = SlabSetup(d=3, heights=tuple(range(8)), laziness=tuple(1.0 - 0.05 * i for i in range(8)), depth=6)
    for seed in range(10):
        out = run_slab_trial(s, seed)
        assert out.implication_holds
    assert run_slab_trial(s, 1, simulate=False).exclusive is None
