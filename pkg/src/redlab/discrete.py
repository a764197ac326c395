"""Discrete-time model with the self-clocked step ``delta = 1/c``.

With ``n`` senders switched on, a step lasts ``n * delta`` and every active
sender receives one acknowledgement per step. Phases per sender::

    CA   W += 1/W, q += 1/W
    DDN  same maps, timer counts the RTT (in steps) measured at the drop
    RNS  W frozen, q -= 1           floor(m/2) steps after the cut
    RT   W frozen, q frozen          the rest of the m-step recovery

``x`` follows ``x' = w q + (1 - w) x`` with the pre-step ``q`` in every phase.
Senders switching off take their window out of the queue at once
(``q -= W``) and put it back when they switch on again.
"""

from __future__ import annotations

import logging
import math
from typing import Sequence

import numpy as np

from ._engine import Recorder, Schedule
from .core import (
    DiscreteState,
    IntegrationDiverged,
    NetworkConfig,
    Phase,
    RedParams,
    Source,
    Trace,
)
from .drops import DropMode, DropProcess, StreamBank

log = logging.getLogger(__name__)

CA, DDN, RNS, RT = (int(p) for p in Phase)


def initial_state(cfg: NetworkConfig, t0: float = 0.0) -> DiscreteState:
    """``q = 0`` and the bandwidth-delay product ``W_i = c * a_i``."""
    return DiscreteState(t=t0, W=tuple(cfg.c * a for a in cfg.a), q=0.0, x=0.0)


def _nint(v):
    return np.floor(np.asarray(v) + 0.5).astype(np.int64)


def rtt_steps(q: float, cfg: NetworkConfig, sender: int = 0, n_active: int = 1) -> int:
    """Round-trip time of ``sender`` in model steps, ``nint((a/delta + q)/n)``."""
    if q < 0:
        raise ValueError("queue length must be non-negative")
    return max(int(_nint((cfg.a[sender] / cfg.delta + q) / n_active)), 1)


class DiscreteBatch:
    """A batch of independent discrete-model trajectories advanced in lockstep.

    All members share the time grid (the step length depends only on the
    sender schedule), so ``t`` and ``k`` are scalars.
    """

    def __init__(self, cfg: NetworkConfig, red: RedParams, process: DropProcess):
        self.cfg, self.red, self.process = cfg, red, process
        self.batch = process.size
        n = cfg.n_senders
        self.a_slots = cfg.a_array / cfg.delta
        self.schedule = Schedule(cfg)
        self.W = np.zeros((self.batch, n))
        self.q = np.zeros(self.batch)
        self.x = np.zeros(self.batch)
        self.phase = np.zeros((self.batch, n), dtype=np.int8)
        self.timer = np.zeros((self.batch, n), dtype=np.int64)
        self.m = np.zeros((self.batch, n), dtype=np.int64)
        self.k = 0
        self.t0 = 0.0
        self.slots = 0
        self.prev_on = None
        self.violations = np.zeros(self.batch, dtype=np.int64)

    @property
    def t(self) -> float:
        return self.t0 + self.slots * self.cfg.delta

    def load(self, states: Sequence[DiscreteState]) -> None:
        if len(states) != self.batch:
            raise ValueError("one initial state per batch member is required")
        s0 = states[0]
        self.t0, self.k, self.slots = float(s0.t), int(getattr(s0, "k", 0)), 0
        self.W[:] = [s.W for s in states]
        self.q[:] = [s.q for s in states]
        self.x[:] = [s.x for s in states]
        self.phase[:] = [[int(p) for p in s.phase] for s in states]
        self.timer[:] = [[int(round(v)) for v in s.timer] for s in states]
        self.m[:] = [getattr(s, "m", (0,) * len(s.W)) for s in states]
        self.prev_on = self.schedule.mask(self.t)

    def state(self, b: int = 0) -> DiscreteState:
        return DiscreteState(
            t=self.t,
            W=tuple(self.W[b]),
            q=float(self.q[b]),
            x=float(self.x[b]),
            phase=tuple(Phase(int(p)) for p in self.phase[b]),
            timer=tuple(float(v) for v in self.timer[b]),
            k=self.k,
            m=tuple(int(v) for v in self.m[b]),
        )

    def reindex(self, idx: np.ndarray) -> None:
        """Replace members by ``idx`` (resampling)."""
        for name in ("W", "q", "x", "phase", "timer", "m", "violations"):
            setattr(self, name, getattr(self, name)[idx].copy())
        self.process.reindex(idx)

    def _rtt_steps(self, q: np.ndarray, n_on: int) -> np.ndarray:
        return np.maximum(_nint((self.a_slots[None, :] + q[:, None]) / n_on), 1)

    def step(self, rec: Recorder | None = None) -> None:
        on = self.schedule.mask(self.t)
        if on is not self.prev_on and not np.array_equal(on, self.prev_on):
            went_off = self.prev_on & ~on
            came_on = on & ~self.prev_on
            self.q = np.maximum(
                self.q - self.W[:, went_off].sum(axis=1) + self.W[:, came_on].sum(axis=1), 0.0
            )
            self.phase[:, went_off] = CA
            self.timer[:, went_off] = 0
        self.prev_on = on
        n_on = max(int(on.sum()), 1)

        W, q, x, phase = self.W, self.q, self.x, self.phase
        grow = on[None, :] & (phase <= DDN)
        cut = grow & (phase == DDN) & (self.timer == 1)
        inv = np.where(grow, 1.0 / W, 0.0)
        q_new = q + inv.sum(axis=1) - (on[None, :] & (phase == RNS)).sum(axis=1)
        bad = q_new < 0
        if bad.any():
            self.violations += bad
            q_new = np.maximum(q_new, 0.0)
        x_new = self.red.w * q + (1.0 - self.red.w) * x
        W_new = np.where(grow, W + inv, W)
        W_new = np.where(cut, np.maximum(W / 2.0, 1.0), W_new)

        ticking = phase != CA
        timer = np.where(ticking, self.timer - 1, self.timer)
        if cut.any():
            m = self._rtt_steps(q_new, n_on)
            self.m = np.where(cut, m, self.m)
            timer = np.where(cut, m, timer)
            phase[cut & (m // 2 > 0)] = RNS
            phase[cut & (m // 2 == 0)] = RT
        nosend_over = (phase == RNS) & ~cut & (timer <= self.m - self.m // 2)
        phase[nosend_over] = RT
        done = (phase == RT) & ~cut & (timer <= 0)
        phase[done] = CA
        timer[done] = 0

        self.W, self.q, self.x, self.timer = W_new, q_new, x_new, timer
        self.k += 1
        self.slots += n_on
        self._drops(on, n_on, rec)

    def _drops(self, on, n_on, rec) -> None:
        proc = self.process
        fires = proc.step(self.x, self.q, float(n_on))
        if not fires.any():
            return
        m_new = self._rtt_steps(self.q, n_on)
        t = self.t
        if proc.mode is DropMode.FULL_RED:
            R = self.cfg.a_array[None, :] + self.q[:, None] / self.cfg.c
            share = np.where(on[None, :], self.W / R, 0.0)
            for i in range(int(fires.max())):
                who = proc.select(fires > i, share)
                for b in np.flatnonzero(who >= 0):
                    j = who[b]
                    if rec is not None:
                        rec.drop(int(b), t, int(j))
                    if self.phase[b, j] == CA:
                        self.phase[b, j] = DDN
                        self.timer[b, j] = m_new[b, j]
            return
        hit = (fires > 0)[:, None] & on[None, :] & (self.phase == CA)
        self.phase[hit] = DDN
        self.timer = np.where(hit, m_new, self.timer)
        if rec is not None:
            for b, j in zip(*np.nonzero(hit)):
                rec.drop(int(b), t, int(j))

    def record(self, rec: Recorder) -> None:
        rec.record(self.t, self.W, self.q, self.x, self.phase, self.k)

    def check_finite(self) -> None:
        if not (np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.W))):
            raise IntegrationDiverged(self.t)

    def advance_to(self, t_target: float, rec: Recorder | None = None) -> None:
        """Step while the next step would not overshoot ``t_target``."""
        d = self.cfg.delta
        while True:
            n_on = max(int(self.schedule.mask(self.t).sum()), 1)
            if self.t + n_on * d > t_target + 1e-9 * d:
                break
            self.step(rec)


def _single(state, cfg, red, drop_process) -> DiscreteState:
    proc = drop_process or DropProcess(DropMode.DETERMINISTIC, red)
    if proc.size != 1:
        raise ValueError("expected a single-member drop process")
    sim = DiscreteBatch(cfg, red, proc)
    sim.load([state])
    sim.k = state.k
    sim.step()
    if sim.violations[0]:
        log.debug("queue floored at zero at t=%.6f: saturation assumption violated", sim.t)
    return sim.state()


def step(state: DiscreteState, cfg: NetworkConfig, red: RedParams,
         drop_process: DropProcess | None = None) -> DiscreteState:
    """Advance one model step (default drop process: deterministic)."""
    return _single(state, cfg, red, drop_process)


def multi_sender_step(state: DiscreteState, cfg: NetworkConfig, red: RedParams,
                      drop_process: DropProcess | None = None) -> DiscreteState:
    """Advance one ``n * delta`` step of an ``n``-sender configuration
    (``n`` counts the senders switched on; ``n = 1`` is :func:`step`)."""
    return _single(state, cfg, red, drop_process)


def _run(cfg, red, process, t_end, initials) -> list[Trace]:
    sim = DiscreteBatch(cfg, red, process)
    sim.load(initials)
    if t_end < sim.t0:
        raise ValueError("t_end must not precede the initial time")
    capacity = int(math.ceil((t_end - sim.t0) / cfg.delta)) + 2
    rec = Recorder(sim.batch, cfg.n_senders, capacity, with_k=True)
    sim.record(rec)
    check_every = 1000
    while True:
        n_on = max(int(sim.schedule.mask(sim.t).sum()), 1)
        if sim.t + n_on * cfg.delta > t_end + 1e-9 * cfg.delta:
            break
        sim.step(rec)
        sim.record(rec)
        if sim.k % check_every == 0:
            sim.check_finite()
    sim.check_finite()
    traces = rec.traces(Source.DISCRETE)
    for tr, v in zip(traces, sim.violations):
        tr.diagnostics["saturation_violations"] = int(v)
        if v:
            log.info("queue floored at zero in %d steps (saturation assumption violated)", v)
    return traces


def _process(drop, red, seeds) -> DropProcess:
    if isinstance(drop, DropProcess):
        return drop
    mode = DropMode.parse(drop)
    streams = StreamBank(list(seeds)) if mode is DropMode.FULL_RED else None
    return DropProcess(mode, red, len(seeds), streams)


def simulate(
    cfg: NetworkConfig,
    red: RedParams,
    drop: DropMode | str | DropProcess,
    t_end: float,
    initial: DiscreteState | None = None,
    seed=None,
) -> Trace:
    """Iterate the map from ``initial`` (default :func:`initial_state`) until
    the next step would pass ``t_end``; one sample per step."""
    initial = initial or initial_state(cfg)
    return _run(cfg, red, _process(drop, red, [seed]), t_end, [initial])[0]


def simulate_batch(
    cfg: NetworkConfig,
    red: RedParams,
    drop: DropMode | str,
    t_end: float,
    seeds: Sequence,
    initial: DiscreteState | None = None,
) -> list[Trace]:
    """One realisation per seed, vectorised; member ``i`` equals
    ``simulate(..., seed=seeds[i])``."""
    initial = initial or initial_state(cfg)
    return _run(cfg, red, _process(drop, red, seeds), t_end, [initial] * len(seeds))
