import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from redlab.core import (
    ConfigError,
    ModelState,
    NetworkConfig,
    Phase,
    RedParams,
    Source,
    Trace,
    capacity_pps,
    phase_codes,
    red_probability,
    rtt,
)


@pytest.mark.parametrize("bw, size, expected", [
    (1.5e6, 1000, 187.5),
    (8000, 1000, 1.0),
    (1.5e6, 500, 375.0),
])
def test_capacity_examples(bw, size, expected):
    assert capacity_pps(bw, size) == expected


@pytest.mark.parametrize("bw, size", [(0, 1000), (1.5e6, 0), (-1, 10)])
def test_capacity_rejects_nonpositive(bw, size):
    with pytest.raises(ConfigError):
        capacity_pps(bw, size)


@pytest.mark.parametrize("q, expected", [(0, 0.01), (50, 0.276667), (100, 0.543333)])
def test_rtt_examples(q, expected):
    assert rtt(q, 0.01, 187.5) == pytest.approx(expected, abs=1e-6)


def test_rtt_negative_queue():
    with pytest.raises(ValueError):
        rtt(-1.0, 0.01, 187.5)


@pytest.mark.parametrize("x, expected", [(40, 0.0), (50, 0.0), (75, 0.05), (120, 1.0)])
def test_red_probability_examples(red, x, expected):
    assert red_probability(x, red) == pytest.approx(expected)


def test_red_probability_jump_at_q_max(red):
    assert red_probability(red.q_max, red) == red.p_max
    assert red_probability(np.nextafter(red.q_max, np.inf), red) == 1.0
    assert red_probability(np.nextafter(red.q_max, -np.inf), red) == pytest.approx(red.p_max)


@given(st.floats(0, 200), st.floats(0, 200))
def test_red_probability_monotone(x1, x2):
    red = RedParams()
    lo, hi = sorted((x1, x2))
    assert red_probability(lo, red) <= red_probability(hi, red)


@given(st.floats(0, 99.999), st.floats(1e-6, 1e-3))
def test_red_probability_continuous_below_q_max(x, eps):
    red = RedParams()
    slope = red.p_max / (red.q_max - red.q_min)
    gap = abs(red_probability(min(x + eps, red.q_max), red) - red_probability(x, red))
    assert gap <= slope * eps * (1 + 1e-9) + 1e-15


@given(st.floats(0, 1e4), st.floats(1e-4, 1.0), st.sampled_from([1.0, 187.5, 375.0]))
def test_rtt_affine_in_q(q, a, c):
    assert rtt(q + 1.0, a, c) > rtt(q, a, c)
    # adding c packets adds one second (to float precision of the inputs)
    assert rtt(q + c, a, c) - rtt(q, a, c) == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("c", [1.0, 187.5, 375.0])
def test_rtt_c_packets_is_one_second_exactly(c):
    assert rtt(c, 0.0, c) - rtt(0.0, 0.0, c) == 1.0


@given(st.floats(1e3, 1e10), st.integers(40, 9000))
def test_capacity_round_trip(bw, size):
    back = capacity_pps(bw, size) * size * 8
    assert abs(back - bw) <= math.ulp(bw)


@pytest.mark.parametrize("kw", [
    dict(q_min=0), dict(q_min=60, q_max=50), dict(p_max=0), dict(p_max=1.5),
    dict(w=0), dict(w=1),
])
def test_red_params_validation(kw):
    with pytest.raises(ConfigError):
        RedParams(**kw)


def test_network_defaults(net):
    assert net.c == 187.5
    assert net.delta == pytest.approx(1 / 187.5)
    assert net.n_senders == 1
    assert net.active(0.0).tolist() == [True]


def test_network_schedules():
    cfg = NetworkConfig(a=(0.02, 0.035), schedules=(((0, math.inf),), ((0, 75), (125, math.inf))))
    assert cfg.active(80.0).tolist() == [True, False]
    assert cfg.active(125.0).tolist() == [True, True]
    assert cfg.switch_times() == [0.0, 75.0, 125.0]


@pytest.mark.parametrize("kw", [
    dict(a=()), dict(a=(0.0,)), dict(a=(0.01,), schedules=(((5, 5),),)),
    dict(a=(0.01, 0.02), schedules=(((0, 1),),)), dict(buffer_limit=0),
])
def test_network_validation(kw):
    with pytest.raises(ConfigError):
        NetworkConfig(**kw)


def test_model_state_defaults_and_validity():
    s = ModelState(t=0.0, W=(2.0, 3.0), q=1.0, x=0.5)
    assert s.phase == (Phase.CONGESTION_AVOIDANCE,) * 2
    assert s.is_valid()
    assert not ModelState(t=0.0, W=(0.5,), q=1.0, x=0.0).is_valid()
    assert not ModelState(t=0.0, W=(2.0,), q=-1.0, x=0.0).is_valid()
    ddn = ModelState(t=0.0, W=(2.0,), q=1.0, x=0.0,
                     phase=(Phase.DELAYED_DROP_NOTIFICATION,), timer=(0.1,))
    assert ddn.pending_cut == frozenset({0})
    with pytest.raises(ValueError):
        ModelState(t=0.0, W=(2.0,), q=0.0, x=0.0, phase=(Phase.CONGESTION_AVOIDANCE,) * 2)


def test_phase_codes_round_trip():
    phases = list(Phase)
    text = phase_codes(phases)
    assert [Phase.from_short(p) for p in text.split("/")] == phases


def _trace():
    t = np.arange(5.0)
    return Trace(
        source=Source.CONTINUOUS, t=t, W=np.ones((5, 1)), q=t * 2, x=t,
        phase=np.zeros((5, 1), dtype=np.int8),
        drop_t=np.array([1.5, 3.0]), drop_sender=np.array([0, 0]),
    )


def test_trace_invariants_enforced():
    with pytest.raises(ValueError):
        Trace(source=Source.ORACLE, t=np.array([0.0, 0.0]), W=np.ones((2, 1)),
              q=np.zeros(2), x=np.zeros(2), phase=np.zeros((2, 1), dtype=np.int8))
    with pytest.raises(ValueError):
        Trace(source=Source.ORACLE, t=np.array([0.0, 1.0]), W=np.ones((2, 1)),
              q=np.zeros(2), x=np.zeros(2), phase=np.zeros((2, 1), dtype=np.int8),
              drop_t=np.array([2.0]), drop_sender=np.array([0]))


def test_trace_window_and_decimate():
    tr = _trace()
    w = tr.window(1.0, 3.0)
    assert w.t.tolist() == [1.0, 2.0]
    assert w.drop_events == [(1.5, 0)]
    d = tr.decimate(2)
    assert d.t.tolist() == [0.0, 2.0, 4.0]
    assert tr.equals(_trace())
    assert tr.state_at(2).q == 4.0
