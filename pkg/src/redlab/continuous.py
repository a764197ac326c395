"""Continuous-time hybrid model: window/queue/average ODEs integrated with
Euler steps, plus the window-halving impulse and its phase automaton.

The integrator works in units of the packet spacing ``delta = 1/c``: with
``s = h / delta`` every increment is ``s`` times a per-packet-slot quantity.
At ``h = delta`` (``s == 1``) a step is therefore exactly the unit-step map
of :func:`unit_step_map`, bit for bit.

Phases per sender::

    CA  --x > q_min-->  DDN  --timer R(q)-->  [halve W]  RT  --timer R(q)-->  CA

Recovery (``RT``) holds ``W`` fixed while the flow equations keep running.
With ``emulate_no_send`` the first half of recovery also stops the sender's
inflow (``RNS``), an optional extension of the basic model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._engine import Recorder, Schedule
from .core import (
    ConfigError,
    IntegrationDiverged,
    ModelState,
    NetworkConfig,
    Phase,
    RedParams,
    Source,
    Trace,
)
from .drops import DropMode, DropProcess

# plain ints: comparing int8 arrays against IntEnum members is slow
CA, DDN, RNS, RT = (int(p) for p in Phase)

# timers are compared against zero after subtracting the step; slack for rounding
_EXPIRY_EPS = 1e-9


@dataclass(frozen=True)
class OdeRates:
    """Right-hand side in packets per second."""

    dW: tuple[float, ...]
    dq: float
    dx: float


@dataclass(frozen=True)
class IntegratorConfig:
    """Euler integration and model-variant settings.

    Args:
        h: step in seconds; ``None`` means ``delta / 4``.
        saturated: use ``dq = inflow - c`` without the empty-queue branch.
        drop_mode: which drop process drives the automaton.
        avg_rate: rate at which RED samples the queue, ``"capacity"`` (``c``)
            or ``"arrivals"`` (the inflow). ``None`` picks capacity for the
            saturated model and arrivals otherwise.
        emulate_no_send: stop a cut sender's inflow for the first half of
            its recovery.
        sample_every: record one sample every this many steps.
    """

    h: float | None = None
    saturated: bool = True
    drop_mode: DropMode = DropMode.DETERMINISTIC
    avg_rate: str | None = None
    emulate_no_send: bool = False
    sample_every: int = 1

    def __post_init__(self):
        object.__setattr__(self, "drop_mode", DropMode.parse(self.drop_mode))
        if self.avg_rate not in (None, "capacity", "arrivals"):
            raise ConfigError(f"unknown avg_rate {self.avg_rate!r}")
        if self.sample_every < 1:
            raise ConfigError("sample_every must be at least 1")

    def step_size(self, cfg: NetworkConfig) -> float:
        h = cfg.delta / 4 if self.h is None else self.h
        if not 0 < h <= cfg.delta * (1 + 1e-12):
            raise ConfigError(f"step h={h} must satisfy 0 < h <= delta={cfg.delta}")
        return h

    @property
    def capacity_average(self) -> bool:
        if self.avg_rate is None:
            return self.saturated
        return self.avg_rate == "capacity"


def initial_state(cfg: NetworkConfig, t0: float = 0.0) -> ModelState:
    """Onset of saturation: bandwidth-delay windows, empty queue."""
    return ModelState(t=t0, W=tuple(cfg.a_array * cfg.c), q=0.0, x=0.0)


def rates(
    state: ModelState,
    cfg: NetworkConfig,
    red: RedParams,
    saturated: bool = True,
    avg_rate: str | None = None,
) -> OdeRates:
    """Time derivatives of ``(W_i, q, x)`` for the current phase.

    Senders that are switched off contribute no inflow and do not grow;
    senders in recovery hold their window.
    """
    on = cfg.active(state.t)
    W = np.asarray(state.W)
    phase = np.asarray([int(p) for p in state.phase])
    R = cfg.a_array + state.q / cfg.c
    inflow = np.where(on & (phase != RNS), W / R, 0.0)
    total = inflow.sum()
    dW = np.where(on & (phase <= DDN), 1.0 / R, 0.0)
    dq = total - cfg.c
    if not saturated and state.q <= 0:
        dq = max(dq, 0.0)
    capacity = saturated if avg_rate is None else avg_rate == "capacity"
    dx = red.w * (state.q - state.x) * (cfg.c if capacity else total)
    return OdeRates(dW=tuple(float(v) for v in dW), dq=float(dq), dx=float(dx))


def unit_step_map(W, q, x, cfg: NetworkConfig, red: RedParams):
    """Single-sender map obtained from an Euler step of size ``1/c``.

    ``W' = W + 1/(ac+q)``; ``q' = q + W/(ac+q) - 1`` for a busy queue and
    ``W/(ac)`` for an empty one (nothing leaves within the step);
    ``x' = x + w (q' - x)``. ``q'`` is floored at zero. Accepts scalars or
    equally shaped arrays (elementwise).
    """
    if cfg.n_senders != 1:
        raise ConfigError("unit_step_map is defined for a single sender")
    ac = cfg.a[0] * cfg.c
    if np.ndim(W) == 0 and np.ndim(q) == 0 and np.ndim(x) == 0:
        D = ac + q
        W_next = W + 1.0 / D
        q_next = q + (W / D - 1.0) if q > 0 else q + W / D
        q_next = max(q_next, 0.0)
        return W_next, q_next, x + red.w * (q_next - x)
    W, q, x = (np.asarray(v, dtype=float) for v in (W, q, x))
    D = ac + q
    q_next = np.maximum(np.where(q > 0, q + (W / D - 1.0), q + W / D), 0.0)
    return W + 1.0 / D, q_next, x + red.w * (q_next - x)


class _Kernel:
    """Batched continuous-model state and step."""

    def __init__(self, cfg: NetworkConfig, red: RedParams, icfg: IntegratorConfig,
                 batch: int, process: DropProcess | None = None):
        self.cfg, self.red, self.icfg = cfg, red, icfg
        self.h = icfg.step_size(cfg)
        self.s = self.h / cfg.delta
        self.ac = cfg.a_array * cfg.c
        self.batch = batch
        self.schedule = Schedule(cfg)
        self.process = process or DropProcess(icfg.drop_mode, red, batch)
        n = cfg.n_senders
        self.W = np.zeros((batch, n))
        self.q = np.zeros(batch)
        self.x = np.zeros(batch)
        self.phase = np.zeros((batch, n), dtype=np.int8)
        self.timer = np.zeros((batch, n))  # in units of delta
        self.nosend = np.zeros((batch, n))
        # a drop suffered during recovery belongs to the next loss episode;
        # its notification is pending here (delta units) until recovery ends
        self.pend = np.zeros((batch, n))
        self.due = np.zeros((batch, n), dtype=bool)
        self.t0 = 0.0
        self.i = 0
        self.prev_on = None

    @property
    def t(self) -> float:
        return self.t0 + self.i * self.h

    def load(self, states: Sequence[ModelState]) -> None:
        c = self.cfg.c
        self.t0 = float(states[0].t)
        self.i = 0
        self.W[:] = [s.W for s in states]
        self.q[:] = [s.q for s in states]
        self.x[:] = [s.x for s in states]
        self.phase[:] = [[int(p) for p in s.phase] for s in states]
        self.timer[:] = [[v * c for v in s.timer] for s in states]
        self.nosend[:] = 0.0
        self.pend[:] = 0.0
        self.due[:] = False
        self.prev_on = self.schedule.mask(self.t)

    def state(self, b: int = 0) -> ModelState:
        d = self.cfg.delta
        return ModelState(
            t=self.t,
            W=tuple(self.W[b]),
            q=float(self.q[b]),
            x=float(self.x[b]),
            phase=tuple(Phase(int(p)) for p in self.phase[b]),
            timer=tuple(float(v) * d for v in self.timer[b]),
        )

    def _flows(self, on):
        D = self.ac + self.q[:, None]
        if self.icfg.emulate_no_send:
            sending = on & (self.nosend <= 0)
        else:
            sending = on
        inflow = np.where(sending, self.W / D, 0.0)
        total = inflow.sum(axis=1)
        growing = on & (self.phase <= DDN)
        return D, inflow, total, growing

    def _switch(self, on) -> None:
        went_off = self.prev_on & ~on
        for arr in (self.timer, self.nosend, self.pend):
            arr[:, went_off] = 0.0
        self.phase[:, went_off] = CA
        self.due[:, went_off] = False

    def step(self, rec: Recorder | None = None) -> None:
        s, w = self.s, self.red.w
        on = self.schedule.mask(self.t)
        if on is not self.prev_on:
            if self.prev_on is not None and not np.array_equal(on, self.prev_on):
                self._switch(on)
            self.prev_on = on

        D, inflow, total, growing = self._flows(on)
        q, x, W = self.q, self.x, self.W
        if self.icfg.saturated:
            dq = total - 1.0
        else:
            dq = np.where(q > 0, total - 1.0, total)
        q_new = np.maximum(q + s * dq, 0.0)
        if self.icfg.capacity_average:
            x_new = x + s * (w * (q_new - x))
        else:
            x_new = x + s * (w * (q_new - x) * total)
        W_new = W + s * np.where(growing, 1.0 / D, 0.0)

        phase = self.phase
        ticking = phase != CA
        if ticking.any():
            W_new = self._automaton(ticking, W, W_new, q_new)

        self.W, self.q, self.x = W_new, q_new, x_new
        self.i += 1
        self._drops(on, total * s, rec)

    def _automaton(self, ticking, W, W_new, q_new):
        s, phase = self.s, self.phase
        left = self.timer - s
        expired = ticking & (left <= _EXPIRY_EPS)
        self.timer = np.where(ticking, left, self.timer)
        if self.icfg.emulate_no_send:
            self.nosend = np.maximum(self.nosend - s, 0.0)
        waiting = self.pend > 0
        if waiting.any():
            self.pend = np.where(waiting, self.pend - s, 0.0)
            self.due |= waiting & (self.pend <= _EXPIRY_EPS)
            self.pend[self.due] = 0.0
        if not expired.any():
            if self.icfg.emulate_no_send:
                phase[(phase == RNS) & (self.nosend <= _EXPIRY_EPS)] = RT
            return W_new
        cut = expired & (phase == DDN)
        done = expired & (phase >= RNS)
        if cut.any():
            R_new = self.ac + q_new[:, None]
            W_new = np.where(cut, np.maximum(W / 2.0, 1.0), W_new)
            self.timer = np.where(cut, R_new, self.timer)
            if self.icfg.emulate_no_send:
                self.nosend = np.where(cut, R_new / 2.0, self.nosend)
                phase[cut] = RNS
            else:
                phase[cut] = RT
        if done.any():
            phase[done] = CA
            self.timer[done] = 0.0
            self.nosend[done] = 0.0
            nxt = done & (self.due | (self.pend > 0))
            if nxt.any():
                # an overdue notification cuts on the next step
                self.timer[nxt] = np.where(self.due[nxt], s, self.pend[nxt])
                phase[nxt] = DDN
                self.pend[nxt] = 0.0
                self.due[nxt] = False
        if self.icfg.emulate_no_send:
            phase[(phase == RNS) & (self.nosend <= _EXPIRY_EPS)] = RT
        return W_new

    def _drops(self, on, arrivals, rec) -> None:
        proc = self.process
        if proc.mode is DropMode.NONE:
            return
        fires = proc.step(self.x, self.q, arrivals)
        if not fires.any():
            return
        R_new = self.ac[None, :] + self.q[:, None]
        if proc.mode is DropMode.FULL_RED:
            share = np.where(on[None, :], self.W / R_new, 0.0)
            for i in range(int(fires.max())):
                sel = fires > i
                who = proc.select(sel, share)
                for b in np.flatnonzero(who >= 0):
                    j = who[b]
                    if rec is not None:
                        rec.drop(b, self.t, int(j))
                    if self.phase[b, j] == CA:
                        self.phase[b, j] = DDN
                        self.timer[b, j] = R_new[b, j]
                    elif (self.phase[b, j] >= RNS and self.pend[b, j] == 0
                          and not self.due[b, j]):
                        self.pend[b, j] = R_new[b, j]
            return
        hit = (fires > 0)[:, None] & on[None, :] & (self.phase == CA)
        self.phase[hit] = DDN
        self.timer = np.where(hit, R_new, self.timer)
        if rec is not None:
            for b, j in zip(*np.nonzero(hit)):
                rec.drop(int(b), self.t, int(j))

    def record(self, rec: Recorder) -> None:
        rec.record(self.t, self.W, self.q, self.x, self.phase)

    def check_finite(self) -> None:
        if not (np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.x))
                and np.all(np.isfinite(self.W))):
            raise IntegrationDiverged(self.t)


def step(
    state: ModelState,
    icfg: IntegratorConfig,
    cfg: NetworkConfig,
    red: RedParams,
    drop_process: DropProcess | None = None,
) -> ModelState:
    """Advance one Euler step of ``icfg.h`` and apply the phase automaton.

    ``drop_process`` carries the RED counter between calls; without one a
    fresh process of ``icfg.drop_mode`` is used (full RED requires one).
    """
    if drop_process is None and icfg.drop_mode is DropMode.FULL_RED:
        raise ValueError("full RED stepping needs an explicit DropProcess")
    k = _Kernel(cfg, red, icfg, 1, drop_process)
    k.load([state])
    k.step()
    k.check_finite()
    return k.state()


def _run(cfg, red, icfg, t_end, initials, process) -> list[Trace]:
    k = _Kernel(cfg, red, icfg, len(initials), process)
    k.load(initials)
    t0 = k.t0
    if t_end < t0:
        raise ValueError("t_end must not precede the initial time")
    n_steps = int(math.floor((t_end - t0) / k.h + 1e-9))
    every = icfg.sample_every
    rec = Recorder(len(initials), cfg.n_senders, n_steps // every + 2)
    k.record(rec)
    check_every = 1000
    for i in range(1, n_steps + 1):
        k.step(rec)
        if i % every == 0 or i == n_steps:
            k.record(rec)
        if i % check_every == 0:
            k.check_finite()
    k.check_finite()
    return rec.traces(Source.CONTINUOUS)


def simulate(
    cfg: NetworkConfig,
    red: RedParams,
    icfg: IntegratorConfig,
    t_end: float,
    initial: ModelState | None = None,
    seed=None,
) -> Trace:
    """Integrate from ``initial`` (default :func:`initial_state`) to ``t_end``.

    Samples are taken every ``icfg.sample_every`` steps; drop events are the
    RED drops (full RED) or the window-cut triggers (other modes).
    """
    initial = initial or initial_state(cfg)
    process = DropProcess.seeded(icfg.drop_mode, red, seed)
    return _run(cfg, red, icfg, t_end, [initial], process)[0]


def simulate_batch(
    cfg: NetworkConfig,
    red: RedParams,
    icfg: IntegratorConfig,
    t_end: float,
    seeds: Sequence,
    initial: ModelState | Sequence[ModelState] | None = None,
) -> list[Trace]:
    """Run one independent realisation per seed in a single vectorised pass.

    ``initial`` is one state shared by all members or one state per seed
    (all at the same time). Member ``i`` is identical to
    ``simulate(..., initial=initial[i], seed=seeds[i])``.
    """
    initial = initial or initial_state(cfg)
    initials = [initial] * len(seeds) if isinstance(initial, ModelState) else list(initial)
    if len(initials) != len(seeds):
        raise ValueError(f"{len(initials)} initial states for {len(seeds)} seeds")
    if len({s.t for s in initials}) > 1:
        raise ValueError("batched initial states must share the start time")
    from .drops import StreamBank

    mode = icfg.drop_mode
    streams = StreamBank(list(seeds)) if mode is DropMode.FULL_RED else None
    process = DropProcess(mode, red, len(seeds), streams)
    return _run(cfg, red, icfg, t_end, initials, process)
