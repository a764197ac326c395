"""Shared domain types and the RTT / RED formulas used by every simulator.

All quantities are in packets and seconds. Bits and bytes appear only at the
configuration boundary (:func:`capacity_pps`).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np


class ConfigError(ValueError):
    """Invalid network, RED or run configuration."""


class IntegrationDiverged(RuntimeError):
    """A simulated state became non-finite."""

    def __init__(self, t: float):
        super().__init__(f"state became non-finite at t={t:.6f} s")
        self.t = t


class Phase(enum.IntEnum):
    """Per-sender phase of the hybrid automaton."""

    CONGESTION_AVOIDANCE = 0
    DELAYED_DROP_NOTIFICATION = 1
    RECOVERY_NO_SEND = 2
    RECOVERY_TRANSMIT = 3

    @property
    def short(self) -> str:
        return _PHASE_SHORT[self]

    @classmethod
    def from_short(cls, code: str) -> "Phase":
        return _SHORT_PHASE[code]


_PHASE_SHORT = {
    Phase.CONGESTION_AVOIDANCE: "CA",
    Phase.DELAYED_DROP_NOTIFICATION: "DDN",
    Phase.RECOVERY_NO_SEND: "RNS",
    Phase.RECOVERY_TRANSMIT: "RT",
}
_SHORT_PHASE = {v: k for k, v in _PHASE_SHORT.items()}

ALWAYS_ON = ((0.0, math.inf),)


def capacity_pps(link_bandwidth: float, packet_size: float) -> float:
    """Bottleneck capacity in packets per second."""
    if not link_bandwidth > 0 or not packet_size > 0:
        raise ConfigError("link_bandwidth and packet_size must be positive")
    return link_bandwidth / (8.0 * packet_size)


def rtt(q, a, c):
    """Round-trip time ``a + q/c`` for queue length ``q`` (scalar or array)."""
    if np.any(np.asarray(q) < 0):
        raise ValueError("queue length must be non-negative")
    return a + q / c


@dataclass(frozen=True)
class RedParams:
    """RED thresholds, maximum drop probability and averaging weight."""

    q_min: float = 50.0
    q_max: float = 100.0
    p_max: float = 0.1
    w: float = 0.003
    wait_mode: bool = True

    def __post_init__(self):
        if not 0 < self.q_min < self.q_max:
            raise ConfigError(f"need 0 < q_min < q_max, got {self.q_min}, {self.q_max}")
        if not 0 < self.p_max <= 1:
            raise ConfigError(f"p_max must lie in (0, 1], got {self.p_max}")
        if not 0 < self.w < 1:
            raise ConfigError(f"w must lie in (0, 1), got {self.w}")


def red_probability(x, red: RedParams):
    """RED drop probability as a function of the averaged queue ``x``.

    The ramp includes both endpoints, so ``x == q_max`` maps to ``p_max`` and
    the jump to 1 happens strictly above ``q_max``. Works on scalars and arrays.
    """
    x_arr = np.asarray(x, dtype=float)
    ramp = (x_arr - red.q_min) / (red.q_max - red.q_min) * red.p_max
    p = np.where(x_arr < red.q_min, 0.0, np.where(x_arr > red.q_max, 1.0, ramp))
    if p.ndim == 0:
        return float(p)
    return p


@dataclass(frozen=True)
class NetworkConfig:
    """Single-bottleneck topology: per-sender delays, link and schedules.

    Args:
        a: fixed propagation delay of each sender in seconds.
        link_bandwidth: bottleneck bandwidth in bits/second.
        packet_size: bytes per packet.
        schedules: for each sender, the ``(on, off)`` intervals during which
            it has data to send. Defaults to always on.
        buffer_limit: router buffer in packets (packet oracle only); ``None``
            means twice the RED ``q_max``.
    """

    a: tuple[float, ...] = (0.01,)
    link_bandwidth: float = 1.5e6
    packet_size: float = 1000.0
    schedules: tuple[tuple[tuple[float, float], ...], ...] = ()
    buffer_limit: float | None = None

    def __post_init__(self):
        a = tuple(float(v) for v in np.atleast_1d(self.a))
        object.__setattr__(self, "a", a)
        if not a:
            raise ConfigError("at least one sender is required")
        if any(not v > 0 for v in a):
            raise ConfigError("propagation delays must be positive")
        capacity_pps(self.link_bandwidth, self.packet_size)
        schedules = self.schedules or (ALWAYS_ON,) * len(a)
        schedules = tuple(
            tuple((float(on), float(off)) for on, off in s) for s in schedules
        )
        if len(schedules) != len(a):
            raise ConfigError("one schedule per sender is required")
        for s in schedules:
            for on, off in s:
                if not off > on:
                    raise ConfigError(f"schedule interval ({on}, {off}) is empty")
        object.__setattr__(self, "schedules", schedules)
        if self.buffer_limit is not None and not self.buffer_limit > 0:
            raise ConfigError("buffer_limit must be positive")

    @property
    def c(self) -> float:
        return capacity_pps(self.link_bandwidth, self.packet_size)

    @property
    def delta(self) -> float:
        return 1.0 / self.c

    @property
    def n_senders(self) -> int:
        return len(self.a)

    @property
    def a_array(self) -> np.ndarray:
        return np.asarray(self.a, dtype=float)

    def active(self, t: float) -> np.ndarray:
        """Boolean mask of senders that have data to send at time ``t``."""
        return np.array(
            [any(on <= t < off for on, off in s) for s in self.schedules], dtype=bool
        )

    def switch_times(self) -> list[float]:
        """Sorted finite times at which any sender turns on or off."""
        times = {v for s in self.schedules for iv in s for v in iv if math.isfinite(v)}
        return sorted(times)


@dataclass(frozen=True)
class ModelState:
    """Hybrid-automaton state of the bottleneck.

    ``phase`` and ``timer`` are kept per sender; in the single-sender case they
    reduce to the scalar automaton. Timers count down in seconds for the
    continuous model and in steps for the discrete one.
    """

    t: float
    W: tuple[float, ...]
    q: float
    x: float
    phase: tuple[Phase, ...] = ()
    timer: tuple[float, ...] = ()

    def __post_init__(self):
        W = tuple(float(v) for v in np.atleast_1d(self.W))
        object.__setattr__(self, "W", W)
        if not self.phase:
            object.__setattr__(self, "phase", (Phase.CONGESTION_AVOIDANCE,) * len(W))
        else:
            object.__setattr__(self, "phase", tuple(Phase(p) for p in self.phase))
        if not self.timer:
            object.__setattr__(self, "timer", (0.0,) * len(W))
        else:
            object.__setattr__(self, "timer", tuple(float(v) for v in self.timer))
        if not len(self.phase) == len(self.timer) == len(W):
            raise ValueError("W, phase and timer must have one entry per sender")

    @property
    def n_senders(self) -> int:
        return len(self.W)

    @property
    def pending_cut(self) -> frozenset[int]:
        """Senders whose window will be halved when their timer expires."""
        return frozenset(
            i for i, p in enumerate(self.phase) if p == Phase.DELAYED_DROP_NOTIFICATION
        )

    def is_valid(self) -> bool:
        finite = all(map(math.isfinite, (self.q, self.x, *self.W)))
        timers_ok = all(
            p == Phase.CONGESTION_AVOIDANCE or tm > 0
            for p, tm in zip(self.phase, self.timer)
        )
        return finite and self.q >= 0 and self.x >= 0 and min(self.W) >= 1 and timers_ok


@dataclass(frozen=True)
class DiscreteState(ModelState):
    """Discrete-model state: adds the step index and the per-sender RTT ``m``
    frozen at the most recent window cut."""

    k: int = 0
    m: tuple[int, ...] = ()

    def __post_init__(self):
        super().__post_init__()
        if not self.m:
            object.__setattr__(self, "m", (0,) * len(self.W))
        else:
            object.__setattr__(self, "m", tuple(int(v) for v in self.m))


class Source(enum.Enum):
    CONTINUOUS = "continuous"
    DISCRETE = "discrete"
    ORACLE = "oracle"


@dataclass
class Trace:
    """Sampled trajectory plus drop events, shared by all three simulators.

    Arrays: ``t`` (N,), ``W`` (N, n), ``q`` (N,), ``x`` (N,), ``phase`` (N, n)
    integer phase codes, ``drop_t`` (D,), ``drop_sender`` (D,). ``k`` holds the
    discrete step index when the source is the discrete model.
    """

    source: Source
    t: np.ndarray
    W: np.ndarray
    q: np.ndarray
    x: np.ndarray
    phase: np.ndarray
    drop_t: np.ndarray = field(default_factory=lambda: np.zeros(0))
    drop_sender: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    k: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.W = np.asarray(self.W, dtype=float).reshape(len(self.t), -1)
        self.q = np.asarray(self.q, dtype=float)
        self.x = np.asarray(self.x, dtype=float)
        self.phase = np.asarray(self.phase, dtype=np.int8).reshape(self.W.shape)
        self.drop_t = np.asarray(self.drop_t, dtype=float)
        self.drop_sender = np.asarray(self.drop_sender, dtype=int)
        if len(self.t) > 1 and np.any(np.diff(self.t) <= 0):
            raise ValueError("trace sample times must be strictly increasing")
        if self.drop_t.size and (
            len(self.t) == 0 or self.drop_t.min() < self.t[0] or self.drop_t.max() > self.t[-1]
        ):
            raise ValueError("drop events must lie within the sampled time range")

    def __len__(self) -> int:
        return len(self.t)

    @property
    def n_senders(self) -> int:
        return self.W.shape[1]

    @property
    def drop_events(self) -> list[tuple[float, int]]:
        return list(zip(self.drop_t.tolist(), self.drop_sender.tolist()))

    @property
    def samples(self) -> Iterator[tuple[float, ModelState]]:
        for i in range(len(self.t)):
            yield float(self.t[i]), self.state_at(i)

    def state_at(self, i: int) -> ModelState:
        return ModelState(
            t=float(self.t[i]),
            W=tuple(self.W[i]),
            q=float(self.q[i]),
            x=float(self.x[i]),
            phase=tuple(Phase(int(p)) for p in self.phase[i]),
            timer=tuple(
                0.0 if p == Phase.CONGESTION_AVOIDANCE else 1.0 for p in self.phase[i]
            ),
        )

    def window(self, t_start: float, t_end: float) -> "Trace":
        """Sub-trace with samples in ``[t_start, t_end)`` and the drops that
        fall between its first and last sample."""
        sel = (self.t >= t_start) & (self.t < t_end)
        dsel = self._drops_within(self.t[sel])
        return Trace(
            source=self.source,
            t=self.t[sel],
            W=self.W[sel],
            q=self.q[sel],
            x=self.x[sel],
            phase=self.phase[sel],
            drop_t=self.drop_t[dsel],
            drop_sender=self.drop_sender[dsel],
            k=None if self.k is None else self.k[sel],
        )

    def decimate(self, factor: int) -> "Trace":
        sl = slice(None, None, factor)
        return Trace(
            source=self.source,
            t=self.t[sl],
            W=self.W[sl],
            q=self.q[sl],
            x=self.x[sl],
            phase=self.phase[sl],
            drop_t=self.drop_t[self._drops_within(self.t[sl])],
            drop_sender=self.drop_sender[self._drops_within(self.t[sl])],
            k=None if self.k is None else self.k[sl],
        )

    def _drops_within(self, t: np.ndarray) -> np.ndarray:
        if t.size == 0:
            return np.zeros(self.drop_t.shape, dtype=bool)
        return (self.drop_t >= t[0]) & (self.drop_t <= t[-1])

    def equals(self, other: "Trace") -> bool:
        """Bit-exact equality of every array."""
        pairs = [
            (self.t, other.t),
            (self.W, other.W),
            (self.q, other.q),
            (self.x, other.x),
            (self.phase, other.phase),
            (self.drop_t, other.drop_t),
            (self.drop_sender, other.drop_sender),
        ]
        same = self.source == other.source and all(
            a.shape == b.shape and np.array_equal(a, b) for a, b in pairs
        )
        if self.k is not None or other.k is not None:
            same = same and self.k is not None and other.k is not None
            same = same and np.array_equal(self.k, other.k)
        return same


def phase_codes(phases: Sequence[Phase]) -> str:
    return "/".join(Phase(p).short for p in phases)
