import math
from dataclasses import replace

import numpy as np
import pytest

from leofl.capability import ResourceProfile
from leofl.config import Config
from leofl.orbital import CONSTANTS, AssetKind, ConstellationSpec, GroundAsset
from leofl.report import read_table
from leofl.simkernel import (
    SCHEMES,
    AggregationConstants,
    Event,
    EventKind,
    LearningConfig,
    Scenario,
    finish_time,
    run,
    schedule_sync,
)


def protocol_scenario(seed=0, horizon=20000.0):
    return Config.load(preset_name="protocol").scenario(seed, horizon)


def small_model_scenario(seed=0, horizon=15000.0):
    cfg = Config.load(preset_name="default")
    cfg.data["training"].update(num_train=240, num_test=100, num_shards=8, distill_epochs=1)
    return cfg.scenario(seed, horizon)


def _profile(rate=1.0, flops=100.0):
    return ResourceProfile.constant(rate, local_epochs=1, flops_per_batch=flops, memory=1.0,
                                    global_model_size=1.0, local_model_size=1.0, proxy_model_size=1.0,
                                    dataset_size=10)


def test_schedule_sync_examples():
    assert schedule_sync(600.0, 1800.0) == [600.0, 1200.0, 1800.0]
    assert schedule_sync(600.0, 500.0) == []
    assert len(schedule_sync(7.0, 100.0)) == math.floor(100 / 7)
    with pytest.raises(ValueError):
        schedule_sync(0.0, 10.0)


def test_event_ordering_and_validation():
    evs = [Event(5.0, EventKind.HANDOVER, 0, 1), Event(5.0, EventKind.UPLOAD_ARRIVAL, 2, 2),
           Event(5.0, EventKind.SYNC_EPOCH, -1, 3), Event(5.0, EventKind.UPLOAD_ARRIVAL, 1, 4),
           Event(4.0, EventKind.HANDOVER, 9, 5)]
    order = [(e.time, e.kind, e.sat_id) for e in sorted(evs, key=lambda e: e.key)]
    assert order == [(4.0, EventKind.HANDOVER, 9), (5.0, EventKind.SYNC_EPOCH, -1),
                     (5.0, EventKind.UPLOAD_ARRIVAL, 1), (5.0, EventKind.UPLOAD_ARRIVAL, 2),
                     (5.0, EventKind.HANDOVER, 0)]
    with pytest.raises(ValueError):
        Event(math.inf, EventKind.HANDOVER)


def test_finish_time_inverts_schedule():
    p = ResourceProfile(((0.0, 1.0), (10.0, 4.0)), 1, 30.0, 1.0, 1.0, 1.0, 1.0, 1)
    assert finish_time(p, 0.0) == pytest.approx(15.0)  # 10 at rate 1, then 20 at rate 4
    assert finish_time(p, 20.0) == pytest.approx(27.5)


@pytest.mark.parametrize("scheme", SCHEMES)
def test_zero_horizon_gives_empty_log(scheme):
    log = run(protocol_scenario(horizon=0.0), scheme)
    assert not log.events and not log.trace and not log.accuracy


def test_unknown_scheme_rejected():
    with pytest.raises(ValueError):
        run(protocol_scenario(), "fedprox")


def test_scenario_validation():
    sc = protocol_scenario()
    with pytest.raises(ValueError):
        replace(sc, budgets=(1.0,))
    with pytest.raises(ValueError):
        replace(sc, assets=tuple(a for a in sc.assets if a.kind is not AssetKind.HAP))
    with pytest.raises(ValueError):
        replace(sc, horizon=-1.0)
    with pytest.raises(ValueError):
        replace(sc, seed=None)


def _zenith_scenario(horizon=4000.0):
    # an equatorial orbit at the synchronous radius hovers over an equatorial HAP
    a = (CONSTANTS.gravitational_parameter / CONSTANTS.earth_rotation_rate ** 2) ** (1 / 3)
    spec = ConstellationSpec(num_planes=1, sats_per_plane=1, inclination=0.0,
                             plane_altitudes=(a - CONSTANTS.earth_radius,))
    hap = GroundAsset(0.0, 0.0, 20.0, AssetKind.HAP, "hap")
    return Scenario(constellation=spec, assets=(hap,), profiles=(_profile(),), budgets=(0.5,),
                    horizon=horizon, seed=1, aggregation=AggregationConstants(nu=0.0),
                    learning=LearningConfig(mode="surrogate"))


def test_zenith_singleton_applies_full_weight():
    log = run(_zenith_scenario(), "proposed")
    arrivals = [r for r in log.trace if r[1] == "arrival"]
    assert len(arrivals) >= 5
    assert all(r[4] == 1.0 for r in arrivals)
    # the HAP state lands exactly on the uploaded satellite state
    assert all(eta == 1.0 and after == 0.0 for eta, _, after in log.contraction)
    assert not log.warnings


def test_no_contact_scenario_warns():
    spec = ConstellationSpec(num_planes=1, sats_per_plane=1, inclination=0.0, plane_altitudes=(500.0,))
    hap = GroundAsset(math.radians(80.0), 0.0, 20.0, AssetKind.HAP)
    sc = Scenario(constellation=spec, assets=(hap,), profiles=(_profile(),), budgets=(1.0,),
                  horizon=5000.0, seed=0, learning=LearningConfig(mode="surrogate"))
    log = run(sc, "proposed")
    assert log.warnings and not log.trace


@pytest.mark.parametrize("scheme", ["proposed", "sync-baseline", "async-baseline", "no-injection"])
def test_protocol_invariants(scheme):
    log = run(protocol_scenario(seed=3, horizon=40000.0), scheme)
    assert log.trace
    assert all(r[5] >= 0 for r in log.trace)
    for stream in (log.events, log.trace, log.accuracy, log.global_accuracy, log.membership):
        times = [r[0] for r in stream]
        assert times == sorted(times)
    by_sat = {}
    for join, sat, hap, leave in log.membership:
        by_sat.setdefault(sat, []).append((join, leave))
    for spans in by_sat.values():
        spans.sort()
        assert all(b0 <= a1 for (_, b0), (a1, _) in zip(spans, spans[1:]))
    for eta, before, after in log.contraction:
        assert after == pytest.approx((1 - eta) * before, rel=1e-9, abs=1e-12)


def test_sync_events_precede_arrivals_at_equal_time():
    log = run(protocol_scenario(seed=1, horizon=40000.0), "proposed")
    rank = {k.name: int(k) for k in EventKind}
    for a, b in zip(log.events, log.events[1:]):
        if a[0] == b[0]:
            assert rank[a[1]] <= rank[b[1]]


def test_determinism_surrogate(tmp_path):
    a = run(protocol_scenario(seed=5, horizon=30000.0), "proposed")
    b = run(protocol_scenario(seed=5, horizon=30000.0), "proposed")
    assert a.digest() == b.digest()
    pa, pb = a.write(tmp_path / "a"), b.write(tmp_path / "b")
    for x, y in zip(pa, pb):
        assert x.read_bytes() == y.read_bytes()
    c = run(protocol_scenario(seed=6, horizon=30000.0), "proposed")
    assert c.digest() != a.digest()


def test_determinism_and_outputs_with_networks(tmp_path):
    sc = small_model_scenario()
    a, b = run(sc, "proposed"), run(sc, "proposed")
    assert a.digest() == b.digest()
    assert set(a.final_accuracy) == {0, 1, 2, 3}
    paths = a.write(tmp_path)
    cols, rows = read_table(tmp_path / "aggregation_trace.csv", "train-proposed")
    assert cols == ["event_time_s", "kind", "sat_id", "hap_id", "eta", "staleness_s", "global_epoch"]
    assert {r["kind"] for r in rows} <= {"arrival", "sync"}
    assert any(p.name == "summary.json" for p in paths)


def test_ideal_runs_synchronous_rounds():
    log = run(small_model_scenario(horizon=6000.0), "ideal")
    epochs = sorted({r[6] for r in log.trace})
    assert epochs == list(range(1, len(epochs) + 1)) and len(epochs) >= 4
    assert len(log.final_accuracy) == 4


def test_non_idle_mode_keeps_training():
    sc = replace(protocol_scenario(seed=2, horizon=40000.0), idle_after_upload=False)
    idle = run(protocol_scenario(seed=2, horizon=40000.0), "proposed")
    busy = run(sc, "proposed")
    n_idle = sum(r[1] == "arrival" for r in idle.trace)
    n_busy = sum(r[1] == "arrival" for r in busy.trace)
    assert n_busy >= n_idle
