"""Packet-drop machinery: deterministic threshold, expected inter-drop time,
and full RED with the counter/wait rule and proportional sender selection.

:class:`DropProcess` is batched: it carries one independent drop process per
batch member (simulation run or particle), so the same code drives a single
simulation and a 1000-particle ensemble.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import RedParams, red_probability


class DropMode(enum.Enum):
    NONE = "none"
    DETERMINISTIC = "deterministic"
    INTERDROP = "interdrop"
    FULL_RED = "full-red"

    @classmethod
    def parse(cls, value: "DropMode | str") -> "DropMode":
        if isinstance(value, cls):
            return value
        return cls(str(value).replace("_", "-").lower())


def deterministic_fire(x: float, red: RedParams) -> bool:
    """True as soon as the averaged queue exceeds ``q_min``."""
    return x > red.q_min


@dataclass(frozen=True)
class InterdropCoefficients:
    """Linearised drop probability ``p(k) = a1*k + a2`` after RED arms."""

    a1: float
    a2: float


def interdrop_coefficients(q0, x0, red: RedParams) -> InterdropCoefficients:
    """Coefficients of ``p(k)`` when ``x`` is advanced linearly as
    ``x_k = x0 + k*w*(q0 - x0)`` from the arming state ``(q0, x0)``."""
    span = red.q_max - red.q_min
    a1 = red.p_max * red.w * (np.asarray(q0) - np.asarray(x0)) / span
    a2 = red.p_max * (np.asarray(x0) - red.q_min) / span
    if np.ndim(a1) == 0:
        return InterdropCoefficients(float(a1), float(a2))
    return InterdropCoefficients(a1, a2)


def solve_interdrop(coeffs: InterdropCoefficients):
    """Root of ``k = 3 / (2 p(k))`` for ``p(k) = a1*k + a2``.

    Returns ``None`` (``nan`` elementwise for arrays) when no drop is
    predicted: negative discriminant, or a flat zero ramp. With ``a1 == 0`` the
    constant-probability limit ``3 / (2 a2)`` is used.
    """
    a1 = np.asarray(coeffs.a1, dtype=float)
    a2 = np.asarray(coeffs.a2, dtype=float)
    disc = a2 * a2 + 6.0 * a1
    with np.errstate(divide="ignore", invalid="ignore"):
        quad = (-a2 + np.sqrt(np.maximum(disc, 0.0))) / (2.0 * a1)
        flat = 3.0 / (2.0 * a2)
    k = np.where(a1 == 0, np.where(a2 > 0, flat, np.nan), np.where(disc < 0, np.nan, quad))
    k = np.where(k > 0, k, np.nan)
    if k.ndim == 0:
        return None if math.isnan(k) else float(k)
    return k


def expected_interdrop(q0, x0, red: RedParams):
    """Expected number of packets until the next drop once RED is armed at
    ``(q0, x0)``; ``None`` when no drop is expected."""
    return solve_interdrop(interdrop_coefficients(q0, x0, red))


def red_counter_probability(k, p, wait_mode: bool = True):
    """Per-packet drop probability given ``k`` packets since arming or the
    last drop.

    With the wait rule the inter-drop count is uniform on ``[1/p, 2/p)``.
    Without it, dropping is plain geometric at ``p``.
    """
    k = np.asarray(k, dtype=float)
    p = np.asarray(p, dtype=float)
    if wait_mode:
        kp = k * p
        with np.errstate(divide="ignore", invalid="ignore"):
            ramp = p / (2.0 - kp)
        out = np.where(kp < 1.0, 0.0, np.where(kp < 2.0, ramp, 1.0))
        out = np.where(p > 0, out, 0.0)
    else:
        out = np.broadcast_to(p, np.broadcast(k, p).shape).astype(float)
    if out.ndim == 0:
        return float(out)
    return out


def _pick(share: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Row-wise categorical draw: index ``i`` with probability share_i / sum."""
    cum = np.cumsum(share, axis=-1)
    total = cum[..., -1:]
    idx = np.sum(cum <= u[..., None] * total, axis=-1)
    # u*total can round onto the last edge; stay within the positive entries
    last = share.shape[-1] - 1 - np.argmax(share[..., ::-1] > 0, axis=-1)
    return np.minimum(idx, last)


def select_dropped_sender(
    W: Sequence[float],
    R: Sequence[float],
    rng: np.random.Generator,
    active: Sequence[bool] | None = None,
) -> int:
    """Choose the sender that loses a packet, with probability proportional to
    its flow share ``W_i / R_i``. Inactive senders are excluded."""
    share = np.asarray(W, dtype=float) / np.asarray(R, dtype=float)
    if active is not None:
        share = np.where(np.asarray(active, dtype=bool), share, 0.0)
    if not np.any(share > 0):
        raise ValueError("no active sender to drop from")
    return int(_pick(share, np.asarray(rng.random())))


def seed_sequence(seed) -> np.random.SeedSequence:
    """``seed`` as a :class:`numpy.random.SeedSequence` (passed through if it
    already is one)."""
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


class StreamBank:
    """One independent uniform stream per batch member.

    Members consume numbers only when asked to, and each member's sequence
    depends only on its own seed, so a run is reproduced bit-exactly whether
    it is simulated alone or inside a larger batch.
    """

    def __init__(self, seeds: Sequence, block: int = 512):
        self._gens = [np.random.default_rng(s) for s in seeds]
        self._block = block
        self._buf = np.empty((len(self._gens), block))
        self._pos = np.full(len(self._gens), block, dtype=np.int64)

    @classmethod
    def spawn(cls, seed, n: int, **kw) -> "StreamBank":
        return cls(seed_sequence(seed).spawn(n), **kw)

    def __len__(self) -> int:
        return len(self._gens)

    def uniform(self, mask: np.ndarray | None = None) -> np.ndarray:
        """Next uniform for every member in ``mask``; other entries are nan
        and their streams do not advance."""
        n = len(self._gens)
        idx = np.arange(n) if mask is None else np.flatnonzero(mask)
        out = np.full(n, np.nan)
        if idx.size == 0:
            return out
        for i in idx[self._pos[idx] >= self._block]:
            self._buf[i] = self._gens[i].random(self._block)
            self._pos[i] = 0
        out[idx] = self._buf[idx, self._pos[idx]]
        self._pos[idx] += 1
        return out


class DropProcess:
    """Batched RED-side drop decision state.

    Each call to :meth:`step` reports how many drops fired per member after
    a model step that ended with averaged queue ``x`` and queue ``q`` and
    delivered ``arrivals`` packets to the router.

    ``counter`` counts packets since RED armed or since the last drop; it is
    reset whenever ``x`` falls to ``q_min`` or below.
    """

    def __init__(
        self,
        mode: DropMode | str,
        red: RedParams,
        size: int = 1,
        streams: StreamBank | None = None,
    ):
        self.mode = DropMode.parse(mode)
        self.red = red
        self.size = size
        if self.mode is DropMode.FULL_RED and streams is None:
            raise ValueError("full RED needs a random stream per member")
        if streams is not None and len(streams) != size:
            raise ValueError("one stream per batch member is required")
        self.streams = streams if self.mode is DropMode.FULL_RED else None
        self.counter = np.zeros(size)
        self.armed = np.zeros(size, dtype=bool)
        self.target = np.full(size, np.nan)
        self._frac = np.zeros(size)

    @classmethod
    def seeded(cls, mode, red: RedParams, seed=None, size: int = 1) -> "DropProcess":
        mode = DropMode.parse(mode)
        streams = None
        if mode is DropMode.FULL_RED:
            if size == 1:
                streams = StreamBank([seed])
            else:
                streams = StreamBank.spawn(seed, size)
        return cls(mode, red, size, streams)

    @property
    def consumes_randomness(self) -> bool:
        return self.mode is DropMode.FULL_RED

    def reindex(self, idx: np.ndarray) -> None:
        """Copy per-member counters after resampling; streams stay per slot."""
        self.counter = self.counter[idx].copy()
        self.armed = self.armed[idx].copy()
        self.target = self.target[idx].copy()
        self._frac = self._frac[idx].copy()

    def step(self, x, q, arrivals) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        armed_now = x > self.red.q_min
        newly = armed_now & ~self.armed
        self.counter[~armed_now] = 0.0
        self.armed = armed_now
        fires = np.zeros(self.size, dtype=np.int64)
        if self.mode is DropMode.NONE:
            return fires
        if self.mode is DropMode.DETERMINISTIC:
            return armed_now.astype(np.int64)
        arrivals = np.broadcast_to(np.asarray(arrivals, dtype=float), (self.size,))
        if self.mode is DropMode.INTERDROP:
            return self._step_interdrop(x, np.asarray(q, dtype=float), arrivals, newly)
        return self._step_full_red(x, arrivals)

    def _retarget(self, sel, x, q) -> None:
        if np.any(sel):
            self.target[sel] = expected_interdrop(q[sel], x[sel], self.red)
            self.counter[sel] = 0.0

    def _step_interdrop(self, x, q, arrivals, newly) -> np.ndarray:
        armed = self.armed
        self.target[~armed] = np.nan
        self._retarget(newly, x, q)
        self.counter[armed & ~newly] += arrivals[armed & ~newly]
        # no drop was predicted from the previous origin; look again from here
        self._retarget(armed & ~newly & np.isnan(self.target), x, q)
        fire = armed & (self.counter >= self.target)
        if np.any(fire):
            # After a drop the queue trend reverses, so extrapolating x from
            # the drop state overshoots; use the constant-p expectation.
            p = red_probability(x[fire], self.red)
            self.target[fire] = solve_interdrop(InterdropCoefficients(np.zeros_like(p), p))
            self.counter[fire] = 0.0
        return fire.astype(np.int64)

    def _step_full_red(self, x, arrivals) -> np.ndarray:
        self._frac += arrivals
        whole = np.floor(self._frac)
        self._frac -= whole
        p = red_probability(x, self.red)
        p = np.broadcast_to(np.asarray(p, dtype=float), (self.size,))
        fires = np.zeros(self.size, dtype=np.int64)
        for i in range(int(whole.max(initial=0))):
            sel = whole > i
            u = self.streams.uniform(sel)
            live = sel & self.armed
            self.counter[live] += 1.0
            pd = red_counter_probability(self.counter, p, self.red.wait_mode)
            hit = live & (u < pd)
            self.counter[hit] = 0.0
            fires += hit
        return fires

    def select(self, mask: np.ndarray, share: np.ndarray) -> np.ndarray:
        """Sender index for members in ``mask``, proportional to ``share``
        (B, n). Returns -1 elsewhere."""
        out = np.full(self.size, -1, dtype=np.int64)
        if not np.any(mask):
            return out
        u = self.streams.uniform(mask)
        rows = np.flatnonzero(mask & (share.sum(axis=1) > 0))
        if rows.size:
            out[rows] = _pick(share[rows], u[rows])
        return out


def full_red_fire(x: float, red: RedParams, process: DropProcess) -> bool:
    """Offer one arriving packet to a single-member full-RED process."""
    if process.mode is not DropMode.FULL_RED or process.size != 1:
        raise ValueError("full_red_fire needs a single-member full-RED process")
    return bool(process.step(np.array([x]), None, 1.0)[0])
