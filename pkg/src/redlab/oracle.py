"""Packet-level discrete-event simulator of the single-bottleneck topology.

Senders -> RED router -> receiver, with acknowledgements returning over an
uncongested path. Each sender is a bulk-transfer AIMD source:

* one packet per acknowledgement while ``in_flight < floor(W)`` (a second
  packet goes out whenever ``floor(W)`` steps up);
* ``W += 1/W`` per acknowledgement outside recovery;
* a loss is signalled to the sender when the dropped packet's
  acknowledgement would have arrived. The first loss of an episode halves
  ``W`` and freezes it until every packet sent before the loss was
  accounted for (about one round-trip time). Further losses in the same
  episode only free their slot.

The router serves one packet per ``delta`` and applies RED on every arrival:
the averaged queue is updated from the current occupancy, then the
counter-based drop rule (with the wait rule) decides. A full buffer
tail-drops.
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .core import NetworkConfig, Phase, RedParams, Source, Trace, red_probability
from .drops import red_counter_probability

ARRIVE, DEPART, ACK, SWITCH = 0, 1, 2, 3


@dataclass
class SenderTcb:
    W: float
    in_flight: int = 0
    recover: int | None = None
    next_seq: int = 0
    on: bool = False

    @property
    def phase(self) -> Phase:
        if self.recover is None:
            return Phase.CONGESTION_AVOIDANCE
        if self.in_flight >= math.floor(self.W):
            return Phase.RECOVERY_NO_SEND
        return Phase.RECOVERY_TRANSMIT


@dataclass
class RouterState:
    buffer_limit: float
    queue: deque = field(default_factory=deque)
    x: float = 0.0
    red_counter: int = 0


@dataclass
class OracleStats:
    emitted: int = 0
    acked: int = 0
    dropped: int = 0
    tail_dropped: int = 0
    losses_notified: int = 0
    window_cuts: int = 0
    arrivals: int = 0
    # arrival ordinal of every RED (early) drop
    red_drop_arrivals: list = field(default_factory=list)


class PacketOracle:
    """One event-driven run.

    ``early_drop=False`` (or ``red=None``) turns RED off so only the buffer
    limit drops packets; the buffer still defaults to ``2 * q_max``.
    """

    def __init__(
        self,
        cfg: NetworkConfig,
        red: RedParams | None,
        seed=None,
        initial_windows=None,
        record_departures: bool = False,
        early_drop: bool = True,
    ):
        self.cfg = cfg
        self.red = red if early_drop else None
        self.rng = np.random.default_rng(seed)
        self.delta = cfg.delta
        limit = cfg.buffer_limit
        if limit is None:
            limit = 2 * red.q_max if red is not None else math.inf
        if red is not None and not limit > red.q_max:
            raise ValueError("buffer_limit must exceed q_max")
        self.router = RouterState(buffer_limit=limit)
        if initial_windows is None:
            initial_windows = [max(1.0, a * cfg.c) for a in cfg.a]
        self.senders = [SenderTcb(W=float(w)) for w in initial_windows]
        self.stats = OracleStats()
        self.departures: list[float] | None = [] if record_departures else None
        self._events: list = []
        self._drops: list[tuple[float, int]] = []
        self.now = 0.0

    def _push(self, t, kind, sender, seq, lost=False):
        heapq.heappush(self._events, (t, kind, sender, seq, lost))

    def _send(self, i: int) -> None:
        s = self.senders[i]
        d1 = self.cfg.a[i] / 2
        while s.on and s.in_flight < math.floor(s.W):
            self._push(self.now + d1, ARRIVE, i, s.next_seq)
            s.next_seq += 1
            s.in_flight += 1
            self.stats.emitted += 1

    def _arrive(self, i: int, seq: int) -> None:
        r, red = self.router, self.red
        n = len(r.queue)
        self.stats.arrivals += 1
        drop = False
        if red is not None:
            r.x = red.w * n + (1.0 - red.w) * r.x
            if r.x > red.q_min:
                r.red_counter += 1
                p = red_probability(r.x, red)
                pd = red_counter_probability(r.red_counter, p, red.wait_mode)
                if self.rng.random() < pd:
                    drop = True
                    r.red_counter = 0
                    self.stats.red_drop_arrivals.append(self.stats.arrivals)
            else:
                r.red_counter = 0
        if not drop and n >= r.buffer_limit:
            drop = True
            self.stats.tail_dropped += 1
        if drop:
            self.stats.dropped += 1
            self._drops.append((self.now, i))
            # the gap shows up when this packet's acknowledgement was due
            due = self.now + (n + 1) * self.delta + self.cfg.a[i] / 2
            self._push(due, ACK, i, seq, True)
            return
        r.queue.append((i, seq))
        if n == 0:
            self._push(self.now + self.delta, DEPART, i, seq)

    def _depart(self) -> None:
        r = self.router
        i, seq = r.queue.popleft()
        if self.departures is not None:
            self.departures.append(self.now)
        self._push(self.now + self.cfg.a[i] / 2, ACK, i, seq)
        if r.queue:
            j, nseq = r.queue[0]
            self._push(self.now + self.delta, DEPART, j, nseq)

    def _ack(self, i: int, seq: int, lost: bool) -> None:
        s = self.senders[i]
        s.in_flight -= 1
        if lost:
            self.stats.losses_notified += 1
            if s.recover is None:
                s.W = max(s.W / 2.0, 1.0)
                s.recover = s.next_seq - 1
                self.stats.window_cuts += 1
            elif seq >= s.recover:
                s.recover = None
        else:
            self.stats.acked += 1
            if s.recover is not None:
                if seq >= s.recover:
                    s.recover = None
            else:
                s.W += 1.0 / s.W
        self._send(i)

    def _switch(self, i: int) -> None:
        s = self.senders[i]
        s.on = bool(self.cfg.active(self.now)[i])
        self._send(i)

    def run(self, t_end: float, sample_dt: float | None = None) -> Trace:
        """Simulate ``[0, t_end]`` and sample the state every ``sample_dt``
        seconds (default ``delta``)."""
        dt = self.delta if sample_dt is None else sample_dt
        n_samples = int(math.floor(t_end / dt + 1e-9)) + 1
        n = self.cfg.n_senders
        ts = np.arange(n_samples) * dt
        W = np.empty((n_samples, n))
        q = np.empty(n_samples)
        x = np.empty(n_samples)
        phase = np.empty((n_samples, n), dtype=np.int8)

        on0 = self.cfg.active(0.0)
        for i, s in enumerate(self.senders):
            s.on = bool(on0[i])
        for t_sw in self.cfg.switch_times():
            if 0 < t_sw <= t_end:
                for i in range(n):
                    self._push(t_sw, SWITCH, i, -1)
        for i in range(n):
            self._send(i)

        k = 0
        events = self._events
        while events and events[0][0] <= t_end:
            t, kind, i, seq, lost = heapq.heappop(events)
            while k < n_samples and ts[k] < t:
                self._sample(k, W, q, x, phase)
                k += 1
            self.now = t
            if kind == ARRIVE:
                self._arrive(i, seq)
            elif kind == DEPART:
                self._depart()
            elif kind == ACK:
                self._ack(i, seq, lost)
            else:
                self._switch(i)
        while k < n_samples:
            self._sample(k, W, q, x, phase)
            k += 1
        self.now = t_end
        drops = [d for d in self._drops if d[0] <= ts[-1]]
        return Trace(
            source=Source.ORACLE,
            t=ts,
            W=W,
            q=q,
            x=x,
            phase=phase,
            drop_t=np.array([d[0] for d in drops], dtype=float),
            drop_sender=np.array([d[1] for d in drops], dtype=int),
        )

    def _sample(self, k, W, q, x, phase) -> None:
        for i, s in enumerate(self.senders):
            W[k, i] = s.W
            phase[k, i] = s.phase
        q[k] = len(self.router.queue)
        x[k] = self.router.x

    @property
    def outstanding(self) -> int:
        return sum(s.in_flight for s in self.senders)


def run(
    cfg: NetworkConfig,
    red: RedParams | None,
    t_end: float,
    seed=None,
    sample_dt: float | None = None,
    early_drop: bool = True,
) -> Trace:
    """Packet-level reference trace of ``[0, t_end]``."""
    return PacketOracle(cfg, red, seed, early_drop=early_drop).run(t_end, sample_dt)
