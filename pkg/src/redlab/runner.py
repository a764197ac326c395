"""Dispatch a configured run to the matching simulator."""

from __future__ import annotations

from . import continuous, discrete, oracle
from .config import RunConfig
from .core import NetworkConfig, RedParams, Trace
from .drops import DropMode


def integrator_config(run: RunConfig) -> continuous.IntegratorConfig:
    return continuous.IntegratorConfig(
        h=run.h,
        saturated=run.saturated,
        drop_mode=run.drop_mode,
        avg_rate=run.avg_rate,
        emulate_no_send=run.emulate_no_send,
        sample_every=run.sample_every,
    )


def execute(cfg: NetworkConfig, red: RedParams, run: RunConfig) -> Trace:
    """Run ``run.model`` from its default initial state.

    The packet oracle always applies RED per packet; ``drop_mode="none"``
    turns early dropping off so that only the buffer limit drops.
    """
    if run.model == "continuous":
        return continuous.simulate(cfg, red, integrator_config(run), run.t_end, seed=run.seed)
    if run.model == "discrete":
        return discrete.simulate(cfg, red, run.drop_mode, run.t_end, seed=run.seed)
    early = DropMode.parse(run.drop_mode) is not DropMode.NONE
    return oracle.run(cfg, red, run.t_end, seed=run.seed, sample_dt=run.sample_dt,
                      early_drop=early)
