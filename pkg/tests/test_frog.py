from __future__ import annotations

import gzip
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from frogcoex.frog import (
    MemoryGuardError,
    SimConfig,
    TieBreak,
    TypeSpec,
    active_counts,
    active_locations,
    discovery,
    init_state,
    order_actives_at,
    run,
    step,
)
from frogcoex.lattice import l1_norm
from frogcoex.randfield import EtaSpec, RandomField, TupleSample


def two_type(horizon=0, eta=EtaSpec.deterministic(2), **kw):
    return SimConfig(
        d=2,
        type_specs=(TypeSpec(1, 1.0), TypeSpec(2, 0.6)),
        initial_actives=(((0, 0), 1), ((1, 0), 2)),
        eta_spec=eta,
        horizon=horizon,
        **kw,
    )


def test_init_two_actives():
    rec = run(two_type(record_locations=True))
    assert active_counts(rec, 0, 1) == active_counts(rec, 0, 2) == 1
    assert active_locations(rec, 0, 1) == {(0, 0)}
    assert active_locations(rec, 0, 2) == {(1, 0)}
    assert discovery(rec, (0, 0)) == (0, 1)
    assert discovery(rec, (1, 0)) == (0, 2)
    assert discovery(rec, (5, 5)) is None
    with pytest.raises(IndexError):
        active_counts(rec, 1, 1)


def test_empty_initial_is_noop():
    cfg = SimConfig(2, (TypeSpec(1, 1.0),), (), EtaSpec.deterministic(3), horizon=5)
    rec = run(cfg)
    assert rec.counts.sum() == 0 and rec.discoveries == {}


def test_duplicate_initial_sites_rejected():
    with pytest.raises(ValueError):
        SimConfig(2, (TypeSpec(1, 1.0),), (((0, 0), 1), ((0, 0), 1)), EtaSpec.deterministic(1))


def test_bad_laziness_rejected():
    with pytest.raises(ValueError):
        TypeSpec(1, 0.0)
    with pytest.raises(ValueError):
        TypeSpec(0, 0.5)


def single(p=1.0, eta=3, d=2, overrides=None, horizon=1, **kw):
    return SimConfig(d, (TypeSpec(1, p),), (((0,) * d, 1),), EtaSpec.deterministic(eta), horizon=horizon, overrides=overrides, **kw)


def test_forced_step_moves_and_discovers():
    ov = {((0, 0), 1, 0): TupleSample((1, 0), 0.0)}
    rec = run(single(overrides=ov, record_locations=True))
    assert active_locations(rec, 1, 1) == {(1, 0)}
    assert rec.discovery((1, 0)) == (1, 1)
    # Deterministic(3) at the discovered neighbour releases three type-1 particles
    assert rec.discoveries[(1, 0)].released == 3
    assert rec.counts.tolist() == [[1], [4]]


def test_lazy_step_stays():
    ov = {((0, 0), 1, 0): TupleSample((1, 0), 0.7)}
    rec = run(single(p=0.5, overrides=ov, record_locations=True))
    assert active_locations(rec, 1, 1) == {(0, 0)}
    assert len(rec.discoveries) == 1


def test_new_particles_wait_one_step():
    ov = {
        ((0, 0), 1, 0): TupleSample((1, 0), 0.0),
        ((1, 0), 1, 1): TupleSample((1, 0), 0.0),
        ((1, 0), 2, 1): TupleSample((0, 1), 0.0),
        ((1, 0), 3, 1): TupleSample((0, -1), 0.0),
        ((1, 0), 4, 1): TupleSample((-1, 0), 0.0),
    }
    rec = run(single(eta=3, overrides=ov, horizon=2, record_locations=True))
    # all four particles at (1,0) consumed slots 1..4 at time 1
    assert active_locations(rec, 2, 1) == {(2, 0), (1, 1), (1, -1), (0, 0)}


def test_tie_break_policies():
    # types 1 and 2 arrive together at (1,0) from (0,0) and (2,0)
    base = dict(
        d=2,
        type_specs=(TypeSpec(1, 1.0), TypeSpec(2, 1.0)),
        initial_actives=(((0, 0), 1), ((2, 0), 2)),
        eta_spec=EtaSpec.deterministic(4),
        horizon=1,
        overrides={((0, 0), 1, 0): TupleSample((1, 0), 0.0), ((2, 0), 1, 0): TupleSample((-1, 0), 0.0)},
    )
    low = run(SimConfig(tie_break=TieBreak.LOWEST, **base))
    assert low.discovery((1, 0)) == (1, 1)
    assert low.counts[-1].tolist() == [5, 1]
    high = run(SimConfig(tie_break=TieBreak.HIGHEST, **base))
    assert high.discovery((1, 0)) == (1, 2)
    winners = {run(SimConfig(tie_break=TieBreak.RANDOM, seed=s, **base)).discovery((1, 0))[1] for s in range(40)}
    assert winners == {1, 2}


def test_order_actives_rule():
    ov = {((0, 0), 1, 0): TupleSample((1, 0), 0.0)}
    state = init_state(single(eta=2, overrides=ov))
    step(state)
    ps = order_actives_at(state, (1, 0))
    assert [p.id for p in ps] == [(0, (0, 0), 0), (1, (1, 0), 0), (1, (1, 0), 1)]
    assert order_actives_at(state, (0, 0)) == []


def test_order_by_creation_site():
    # two cohorts born at the same time at (0,0)-side and (0,1)-side meet later
    cfg = SimConfig(
        2, (TypeSpec(1, 1.0),), (((0, 0), 1), ((0, 2), 1)), EtaSpec.deterministic(0), horizon=1,
        overrides={((0, 0), 1, 0): TupleSample((0, 1), 0.0), ((0, 2), 1, 0): TupleSample((0, -1), 0.0)},
    )
    state = init_state(cfg)
    step(state)
    ps = order_actives_at(state, (0, 1))
    assert [p.created_at for p in ps] == [(0, 0), (0, 2)]
    assert state.slots().tolist() == [1, 2]


def test_horizon_zero_is_init_snapshot():
    rec = run(two_type(horizon=0))
    assert rec.counts.tolist() == [[1, 1]]
    assert rec.final_time == 0


def test_speed_of_light():
    rec = run(SimConfig(2, (TypeSpec(1, 1.0),), (((0, 0), 1),), EtaSpec.deterministic(1), horizon=20, seed=5))
    assert all(l1_norm(s) <= v.time <= 20 for s, v in rec.discoveries.items())


def test_run_deterministic_bytes(tmp_path):
    cfg = two_type(horizon=12, seed=99, tie_break=TieBreak.RANDOM)
    a, b = run(cfg), run(cfg)
    assert a.to_json() == b.to_json()
    a.write_json(tmp_path / "a.json.gz")
    b.write_json(tmp_path / "b.json.gz")
    assert (tmp_path / "a.json.gz").read_bytes() == (tmp_path / "b.json.gz").read_bytes()
    data = json.loads(gzip.decompress((tmp_path / "a.json.gz").read_bytes()))
    assert set(data) >= {"config", "seed", "counts", "discoveries", "horizon"}
    assert data["discoveries"][0].keys() >= {"site", "time", "type"}


def test_counts_csv_header():
    text = run(two_type(horizon=2)).counts_csv()
    assert text.splitlines()[0] == "n,type_1,type_2"
    assert len(text.splitlines()) == 4


def test_memory_guard():
    cfg = SimConfig(2, (TypeSpec(1, 1.0),), (((0, 0), 1),), EtaSpec.deterministic(3), horizon=30, max_sites=50)
    with pytest.raises(MemoryGuardError, match="cap"):
        run(cfg)


def test_external_field_is_used():
    cfg = single(eta=1, horizon=5, seed=1)
    assert run(cfg).to_json() == run(cfg, field_access=RandomField(1, 2)).to_json()


def _random_config(draw):
    d = draw(st.integers(1, 3))
    k = draw(st.integers(1, 3))
    sites = draw(st.lists(st.lists(st.integers(-3, 3), min_size=d, max_size=d).map(tuple), min_size=k, max_size=k, unique=True))
    laz = draw(st.lists(st.floats(0.05, 1.0), min_size=k, max_size=k))
    eta = draw(st.sampled_from([EtaSpec.deterministic(0), EtaSpec.deterministic(1), EtaSpec.deterministic(2), EtaSpec.two_point(3, 0.5)]))
    return SimConfig(
        d=d,
        type_specs=tuple(TypeSpec(i + 1, p) for i, p in enumerate(laz)),
        initial_actives=tuple((s, i + 1) for i, s in enumerate(sites)),
        eta_spec=eta,
        tie_break=draw(st.sampled_from(list(TieBreak))),
        horizon=draw(st.integers(0, 10)),
        seed=draw(st.integers(0, 2**63)),
        record_locations=True,
    )


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_engine_invariants(data):
    cfg = _random_config(data.draw)
    rec = run(cfg)
    starts = [s for s, _ in cfg.initial_actives]
    released = sum(v.released for v in rec.discoveries.values())
    # conservation, evaluated at every time from the discoveries made so far
    for n in range(rec.final_time + 1):
        made = sum(v.released for v in rec.discoveries.values() if v.time <= n)
        assert rec.counts[n].sum() == len(starts) + made
    assert rec.counts[-1].sum() == len(starts) + released
    assert (np.diff(rec.counts, axis=0) >= 0).all()
    for s, v in rec.discoveries.items():
        assert min(l1_norm(s, x) for x in starts) <= v.time
    for n in range(rec.final_time + 1):
        for i in rec.type_indices:
            for s in rec.active_locations(n, i):
                assert min(l1_norm(s, x) for x in starts) <= n
                # every occupied site was discovered (or is a start) by time n
                assert rec.discovery(s) is not None and rec.discovery(s)[0] <= n


@settings(max_examples=30, deadline=None)
@given(st.data())
def test_type_permanence_and_write_once(data):
    cfg = _random_config(data.draw)
    state = init_state(cfg)
    seen = dict(state.discoveries)
    for _ in range(cfg.horizon):
        before = {p.id: p.type_index for p in state.particles()}
        step(state)
        after = {p.id: p.type_index for p in state.particles()}
        assert all(after[k] == v for k, v in before.items())
        for s, v in seen.items():
            assert state.discoveries[s] == v
        seen = dict(state.discoveries)


def test_coupling_monotone_moves():
    # same tuple, lazier type moves only if the less lazy one does
    f = RandomField(3, 2)
    rng = np.random.default_rng(1)
    sites = rng.integers(-50, 50, size=(5000, 2))
    _, u = f.tuples(sites, np.ones(5000, dtype=np.int64), np.zeros(5000, dtype=np.int64))
    for p, q in [(0.2, 0.5), (0.5, 0.9), (0.6, 1.0)]:
        assert not ((u <= p) & ~(u <= q)).any()


def first_move_times(p, runs, seed0=0, cap=200):
    out = []
    for s in range(runs):
        state = init_state(SimConfig(1, (TypeSpec(1, p),), (((0,), 1),), EtaSpec.deterministic(0), horizon=cap, seed=seed0 + s))
        while state.time < cap:
            step(state)
            if state.pos[0, 0] != 0:
                break
        out.append(state.time)
    return np.array(out)


def geometric_chi_square(times, p):
    kmax = max(2, int(np.ceil(np.log(5.0 / len(times)) / np.log(1 - p)))) if p < 1 else 1
    obs = np.array([(times == k).sum() for k in range(1, kmax)] + [(times >= kmax).sum()], dtype=float)
    probs = np.array([(1 - p) ** (k - 1) * p for k in range(1, kmax)] + [(1 - p) ** (kmax - 1)])
    return stats.chisquare(obs, probs * len(times))


@pytest.mark.parametrize("p", [0.3, 0.7])
def test_laziness_clock_is_geometric(p):
    times = first_move_times(p, 2000)
    assert geometric_chi_square(times, p).pvalue > 0.01


def test_laziness_one_moves_immediately():
    assert (first_move_times(1.0, 100) == 1).all()
