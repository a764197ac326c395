from __future__ import annotations

import math

import numpy as np

from .core import NetworkConfig, Source, Trace


class Schedule:
    """Cached on/off mask; recomputed only when a switch time is crossed."""

    def __init__(self, cfg: NetworkConfig):
        self._cfg = cfg
        self._switches = cfg.switch_times()
        self._valid = (math.inf, -math.inf)
        self._mask = None

    def mask(self, t: float) -> np.ndarray:
        lo, hi = self._valid
        if not lo <= t < hi:
            self._mask = self._cfg.active(t)
            lo = max((s for s in self._switches if s <= t), default=-math.inf)
            hi = min((s for s in self._switches if s > t), default=math.inf)
            self._valid = (lo, hi)
        return self._mask


class Recorder:
    """Preallocated sample storage for a batch of runs."""

    def __init__(self, batch: int, n_senders: int, capacity: int, with_k: bool = False):
        self.t = np.empty(capacity)
        self.W = np.empty((batch, capacity, n_senders))
        self.q = np.empty((batch, capacity))
        self.x = np.empty((batch, capacity))
        self.phase = np.empty((batch, capacity, n_senders), dtype=np.int8)
        self.k = np.empty(capacity, dtype=np.int64) if with_k else None
        self.n = 0
        self.drops: list[list[tuple[float, int]]] = [[] for _ in range(batch)]

    def record(self, t, W, q, x, phase, k=None) -> None:
        i = self.n
        self.t[i] = t
        self.W[:, i] = W
        self.q[:, i] = q
        self.x[:, i] = x
        self.phase[:, i] = phase
        if self.k is not None:
            self.k[i] = k
        self.n += 1

    def drop(self, member: int, t: float, sender: int) -> None:
        self.drops[member].append((t, sender))

    def traces(self, source: Source) -> list[Trace]:
        n = self.n
        out = []
        for b in range(self.W.shape[0]):
            d = self.drops[b]
            out.append(
                Trace(
                    source=source,
                    t=self.t[:n].copy(),
                    W=self.W[b, :n].copy(),
                    q=self.q[b, :n].copy(),
                    x=self.x[b, :n].copy(),
                    phase=self.phase[b, :n].copy(),
                    drop_t=np.array([e[0] for e in d], dtype=float),
                    drop_sender=np.array([e[1] for e in d], dtype=int),
                    k=None if self.k is None else self.k[:n].copy(),
                )
            )
        return out
