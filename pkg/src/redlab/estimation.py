"""Particle-filter state estimation with the discrete model as process model.

An :class:`Ensemble` is a batch of discrete-model trajectories, one per
particle, each driven by its own full-RED random stream. The filter cycle is

    advance -> assimilate (reweight, maybe resample) -> estimate

Observations are noisy windows of some senders and/or a noisy RTT.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

import numpy as np

from .core import ConfigError, DiscreteState, NetworkConfig, Phase, RedParams, Trace
from .discrete import DiscreteBatch
from .drops import DropMode, DropProcess, StreamBank, seed_sequence

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Observation:
    """Noisy partial observation at time ``t``.

    ``windows`` maps sender index to observed window; ``rtt`` is the observed
    round-trip time of ``rtt_sender``.
    """

    t: float
    windows: Mapping[int, float] = field(default_factory=dict)
    rtt: float | None = None
    rtt_sender: int = 0
    window_std: float = 1.0
    rtt_std: float = 0.005

    def __post_init__(self):
        if not self.windows and self.rtt is None:
            raise ValueError("an observation needs at least one channel")
        if not (self.window_std > 0 and self.rtt_std > 0):
            raise ValueError("noise standard deviations must be positive")


@dataclass(frozen=True)
class Prior:
    """Independent uniform ranges for the initial particles.

    ``W`` is one range shared by all senders or one range per sender. ``x``
    defaults to the ``q`` range.
    """

    q: tuple[float, float] = (0.0, 100.0)
    W: tuple = (1.0, 20.0)
    x: tuple[float, float] | None = None

    def ranges(self, n_senders: int):
        W = np.asarray(self.W, dtype=float)
        W = np.broadcast_to(W, (n_senders, 2)) if W.ndim == 1 else W
        if W.shape != (n_senders, 2):
            raise ConfigError("W prior needs one (lo, hi) range or one per sender")
        q = np.asarray(self.q, dtype=float)
        x = q if self.x is None else np.asarray(self.x, dtype=float)
        for lo, hi in (q, x, *W):
            if not lo <= hi:
                raise ConfigError(f"empty prior range ({lo}, {hi})")
        if q[0] < 0 or x[0] < 0 or W[:, 0].min() < 1:
            raise ConfigError("prior must keep q, x >= 0 and W >= 1")
        return q, x, W


@dataclass
class Estimate:
    """Weighted ensemble summary: mean state (modal phases) and spreads."""

    mean: DiscreteState
    std_W: tuple[float, ...]
    std_q: float
    std_x: float


class Ensemble:
    """Weighted particles advanced together.

    Attributes:
        weights: normalised particle weights, shape (N,).
        diagnostics: counters for resampling events and weight resets.
    """

    def __init__(self, cfg: NetworkConfig, red: RedParams, states: Sequence[DiscreteState],
                 seed=None, drop_mode: DropMode | str = DropMode.FULL_RED,
                 jitter: float = 0.0, resample_threshold: float = 0.5):
        n = len(states)
        if n < 2:
            raise ValueError("an ensemble needs at least two particles")
        mode = DropMode.parse(drop_mode)
        streams = StreamBank.spawn(seed, n) if mode is DropMode.FULL_RED else None
        self.cfg, self.red = cfg, red
        self.sim = DiscreteBatch(cfg, red, DropProcess(mode, red, n, streams))
        self.sim.load(states)
        self.weights = np.full(n, 1.0 / n)
        self.rng = np.random.default_rng(seed_sequence(seed).spawn(n + 1)[-1])
        self.jitter = jitter
        self.resample_threshold = resample_threshold
        self.diagnostics = {"resamples": 0, "weight_resets": 0}

    def __len__(self) -> int:
        return len(self.weights)

    @property
    def t(self) -> float:
        return self.sim.t

    @property
    def particles(self) -> Iterator[tuple[DiscreteState, float]]:
        for b in range(len(self)):
            yield self.sim.state(b), float(self.weights[b])

    @property
    def n_eff(self) -> float:
        return 1.0 / float(np.sum(self.weights**2))


def init_ensemble(n: int, prior: Prior, cfg: NetworkConfig, red: RedParams,
                  seed=None, t0: float = 0.0, **kw) -> Ensemble:
    """``n`` particles drawn uniformly from ``prior``, all in congestion
    avoidance, with uniform weights."""
    if n < 2:
        raise ValueError("an ensemble needs at least two particles")
    q_r, x_r, W_r = prior.ranges(cfg.n_senders)
    if np.all(np.diff(np.vstack([q_r, x_r, W_r]), axis=1) == 0):
        log.warning("degenerate prior: all %d particles are identical", n)
    rng = np.random.default_rng(seed)
    q = rng.uniform(q_r[0], q_r[1], n)
    x = q.copy() if prior.x is None else rng.uniform(x_r[0], x_r[1], n)
    W = rng.uniform(W_r[:, 0], W_r[:, 1], (n, cfg.n_senders))
    states = [DiscreteState(t=t0, W=tuple(W[i]), q=q[i], x=x[i]) for i in range(n)]
    return Ensemble(cfg, red, states, seed=seed, **kw)


def advance(ens: Ensemble, dt: float) -> Ensemble:
    """Step every particle forward by whole model steps spanning ``dt``
    seconds; weights are untouched."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    if dt > 0:
        ens.sim.advance_to(ens.t + dt)
    return ens


def log_likelihood(ens: Ensemble, obs: Observation) -> np.ndarray:
    sim = ens.sim
    ll = np.zeros(len(ens))
    for j, w in obs.windows.items():
        ll -= 0.5 * ((sim.W[:, j] - w) / obs.window_std) ** 2
    if obs.rtt is not None:
        R = ens.cfg.a[obs.rtt_sender] + sim.q / ens.cfg.c
        ll -= 0.5 * ((R - obs.rtt) / obs.rtt_std) ** 2
    return ll


def systematic_resample(weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Indices of the systematic resampler (one uniform offset)."""
    n = len(weights)
    positions = (rng.random() + np.arange(n)) / n
    cum = np.cumsum(weights)
    cum[-1] = 1.0
    return np.searchsorted(cum, positions, side="right")


def assimilate(ens: Ensemble, obs: Observation) -> Ensemble:
    """Reweight by the Gaussian likelihood of ``obs``; resample when the
    effective sample size falls below ``resample_threshold * N``."""
    ll = log_likelihood(ens, obs)
    logw = np.log(np.maximum(ens.weights, 1e-300)) + ll
    top = logw.max()
    w = np.exp(logw - top)
    total = w.sum()
    if not np.isfinite(top) or not total > 0 or top - np.log(len(ens)) < -700:
        log.warning("all particle likelihoods vanished at t=%.3f; weights reset", obs.t)
        ens.diagnostics["weight_resets"] += 1
        ens.weights = np.full(len(ens), 1.0 / len(ens))
        return ens
    ens.weights = w / total
    if ens.n_eff < ens.resample_threshold * len(ens):
        resample(ens)
    return ens


def resample(ens: Ensemble) -> Ensemble:
    idx = systematic_resample(ens.weights, ens.rng)
    ens.sim.reindex(idx)
    if ens.jitter > 0:
        sim, n = ens.sim, len(ens)
        sim.q = np.maximum(sim.q + ens.rng.normal(0, ens.jitter, n), 0.0)
        sim.W = np.maximum(sim.W + ens.rng.normal(0, ens.jitter, sim.W.shape), 1.0)
    ens.weights = np.full(len(ens), 1.0 / len(ens))
    ens.diagnostics["resamples"] += 1
    return ens


def _weighted_mean(v, w):
    # offset by one particle so an ensemble of equal values averages exactly
    return v[0] + np.average(v - v[0], weights=w, axis=0)


def _weighted_std(v, w):
    mu = _weighted_mean(v, w)
    return np.sqrt(np.average((v - mu) ** 2, weights=w, axis=0))


def estimate(ens: Ensemble) -> Estimate:
    """Weighted mean and standard deviation; modal phase per sender."""
    sim, w = ens.sim, ens.weights
    n = ens.cfg.n_senders
    phases = []
    for j in range(n):
        mass = np.bincount(sim.phase[:, j], weights=w, minlength=len(Phase))
        phases.append(Phase(int(np.argmax(mass))))
    W_mean = _weighted_mean(sim.W, w)
    mean = DiscreteState(
        t=sim.t,
        W=tuple(W_mean),
        q=float(_weighted_mean(sim.q, w)),
        x=float(_weighted_mean(sim.x, w)),
        phase=tuple(phases),
        timer=tuple(1.0 if p != Phase.CONGESTION_AVOIDANCE else 0.0 for p in phases),
        k=sim.k,
    )
    return Estimate(
        mean=mean,
        std_W=tuple(float(v) for v in _weighted_std(sim.W, w)),
        std_q=float(_weighted_std(sim.q, w)),
        std_x=float(_weighted_std(sim.x, w)),
    )


@dataclass
class TwinResult:
    """Filter estimate against the truth at each observation time."""

    t: np.ndarray
    q_true: np.ndarray
    q_est: np.ndarray
    q_std: np.ndarray
    baseline: float
    diagnostics: dict

    def rmse(self, t_start: float = -math.inf, t_end: float = math.inf) -> float:
        sel = (self.t >= t_start) & (self.t < t_end)
        return float(np.sqrt(np.mean((self.q_est[sel] - self.q_true[sel]) ** 2)))

    def baseline_rmse(self, t_start: float = -math.inf, t_end: float = math.inf) -> float:
        sel = (self.t >= t_start) & (self.t < t_end)
        return float(np.sqrt(np.mean((self.baseline - self.q_true[sel]) ** 2)))


def observations_from_trace(truth: Trace, senders: Sequence[int], every: float,
                            window_std: float = 1.0, rng=None) -> list[Observation]:
    """Noisy window observations of ``senders`` sampled every ``every`` s."""
    rng = np.random.default_rng(rng)
    times = np.arange(every, truth.t[-1] + 1e-9, every)
    idx = np.searchsorted(truth.t, times + 1e-9, side="right") - 1
    out = []
    for t, i in zip(times, idx):
        noisy = truth.W[i, list(senders)] + rng.normal(0, window_std, len(senders))
        out.append(Observation(t=float(t), windows=dict(zip(senders, noisy)),
                               window_std=window_std))
    return out


def run_filter(truth: Trace, cfg: NetworkConfig, red: RedParams,
               observe: Sequence[int] = (0,), every: float = 0.5,
               n_particles: int = 1000, window_std: float = 1.0,
               prior: Prior | None = None, seed=None) -> TwinResult:
    """Track ``truth`` from noisy window observations and report the queue
    estimate at every observation time."""
    prior = prior or Prior(q=(0.0, red.q_max))
    ss = seed_sequence(seed)
    obs_seed, ens_seed = ss.spawn(2)
    observations = observations_from_trace(truth, observe, every, window_std, obs_seed)
    ens = init_ensemble(n_particles, prior, cfg, red, seed=ens_seed, t0=float(truth.t[0]))
    t, q_true, q_est, q_std = [], [], [], []
    for obs in observations:
        advance(ens, obs.t - ens.t)
        assimilate(ens, obs)
        est = estimate(ens)
        i = np.searchsorted(truth.t, obs.t + 1e-9, side="right") - 1
        t.append(obs.t)
        q_true.append(truth.q[i])
        q_est.append(est.mean.q)
        q_std.append(est.std_q)
    return TwinResult(
        t=np.array(t),
        q_true=np.array(q_true),
        q_est=np.array(q_est),
        q_std=np.array(q_std),
        baseline=0.5 * (prior.q[0] + prior.q[1]),
        diagnostics=dict(ens.diagnostics),
    )
