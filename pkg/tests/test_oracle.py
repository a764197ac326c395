import math

import numpy as np
import pytest

from helpers import ks_discrete_uniform
from redlab import oracle
from redlab.core import NetworkConfig, Phase, RedParams, Source
from redlab.oracle import PacketOracle


def test_packet_conservation(red):
    cfg = NetworkConfig(a=(0.02, 0.035), schedules=(((0, 20.0),), ((0, 20.0),)))
    o = PacketOracle(cfg, red, seed=3)
    o.run(25.0)
    st = o.stats
    assert st.emitted > 1000 and st.dropped > 0
    assert st.emitted == st.acked + st.dropped
    assert o.outstanding == 0


def test_work_conservation(net, red):
    o = PacketOracle(net, red, seed=1, record_departures=True)
    tr = o.run(60.0)
    dep = np.asarray(o.departures)
    gaps = np.diff(dep)
    assert gaps.min() >= net.delta * (1 - 1e-9)
    # the queue never empties once the transient is over
    assert tr.window(5.0, math.inf).q.min() > 0
    busy = gaps[dep[1:] > 5.0]
    assert np.allclose(busy, net.delta, rtol=0, atol=1e-9)


def test_deterministic_given_seed(red):
    cfg = NetworkConfig(a=(0.01, 0.02, 0.03, 0.04))
    a = oracle.run(cfg, red, 30.0, seed=5)
    assert a.equals(oracle.run(cfg, red, 30.0, seed=5))
    assert not a.equals(oracle.run(cfg, red, 30.0, seed=6))
    assert a.source is Source.ORACLE


def test_inter_drop_law_with_constant_average():
    red = RedParams(w=1e-12)  # freezes x at its initial value
    cfg = NetworkConfig(a=(0.02,) * 5 + (0.035,) * 5, buffer_limit=1e6)
    o = PacketOracle(cfg, red, seed=2)
    o.router.x = 75.0001  # p = 0.05 (a hair above, so 1/p stays below 20)
    o.run(150.0)
    assert o.stats.tail_dropped == 0
    counts = np.diff(np.r_[0, o.stats.red_drop_arrivals])
    assert counts.size > 500
    assert counts.min() >= 20 and counts.max() <= 39
    assert counts.mean() == pytest.approx(29.5, abs=1.0)
    assert ks_discrete_uniform(counts, 20, 40) < 0.05


def test_tail_drop_without_red(red):
    net = NetworkConfig(buffer_limit=120)
    o = PacketOracle(net, red, seed=0, early_drop=False)
    tr = o.run(60.0)
    assert 119 <= tr.q.max() <= 120
    assert o.stats.tail_dropped == o.stats.dropped > 0
    # additive increase: about one packet per round trip before the first drop
    t_first = tr.drop_t[0]
    pre = tr.window(1.0, t_first)
    R = net.a[0] + pre.q / net.c
    growth = np.diff(pre.W[:, 0]) / np.diff(pre.t)
    assert np.median(growth * R[1:]) == pytest.approx(1.0, rel=0.1)


def test_one_sender_sawtooth(net, red):
    tr = oracle.run(net, red, 100.0, seed=1)
    steady = tr.window(20.0, math.inf)
    assert 0 < steady.q.min() and steady.q.max() < red.q_max
    assert 8 <= tr.drop_t.size <= 16
    assert Phase.RECOVERY_NO_SEND in set(tr.phase[:, 0].tolist())


def test_window_bounds_flight_outside_recovery(net, red):
    o = PacketOracle(net, red, seed=1)
    checks = []
    send = o._send

    def checked(i):
        send(i)
        s = o.senders[i]
        checks.append((s.recover is not None) or s.in_flight <= math.floor(s.W) + 1)
        assert s.W >= 1

    o._send = checked
    o.run(30.0)
    assert all(checks)


def test_schedule_truncates_gracefully(red):
    cfg = NetworkConfig(schedules=(((0, 2.0),),))
    tr = oracle.run(cfg, red, 10.0, seed=0)
    assert tr.t[-1] == pytest.approx(10.0)
    assert tr.q[-1] == 0


def test_drops_within_samples(red):
    tr = oracle.run(NetworkConfig(a=(0.01, 0.02)), red, 40.0, seed=1, sample_dt=0.7)
    assert tr.drop_t.size > 0
    assert tr.drop_t.max() <= tr.t[-1]


def test_buffer_must_exceed_q_max(red):
    with pytest.raises(ValueError):
        PacketOracle(NetworkConfig(buffer_limit=50), red)
