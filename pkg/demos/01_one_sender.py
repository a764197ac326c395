"""
One sender through a RED bottleneck
===================================

The same single TCP flow, run through the continuous model, the discrete
model and the packet-level simulator. All three use deterministic drops:
the window is cut one round trip after the averaged queue crosses q_min.
"""

# %%
# Build the reference network: a 1.5 Mb/s link with 1000-byte packets
# (c = 187.5 packets/s) and a 10 ms propagation delay.
from redlab import analysis, config
from redlab.runner import execute

cfg, red, _ = config.scenario("one-sender")
print(f"c = {cfg.c} packets/s, delta = {cfg.delta * 1e3:.3f} ms")

# %%
# Run each simulator for 100 s and measure the sawtooth after a 10 s warm-up.
for model in ("discrete", "oracle", "continuous"):
    _, _, run = config.scenario("one-sender", model, seed=1)
    trace = execute(cfg, red, run).window(10.0, run.t_end)
    mean, sd = analysis.queue_stats(trace)
    period = analysis.oscillation_period(trace)
    print(f"{model:>10}: queue {mean:6.1f} +- {sd:4.1f}, period {period:5.2f} s")

# %%
# The discrete model drains the queue while the cut sender is silent, so its
# cycles are the shortest. The continuous model keeps sending through
# recovery and has the longest cycles; the packet simulator sits in between.
