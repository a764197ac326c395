"""
Two classes of flows
====================

Five senders with a 20 ms delay and five with 35 ms share the bottleneck.
The second class goes quiet between 75 s and 125 s. The continuous model
with full RED is compared with the packet-level simulator over a few seeds.
"""

# %%
import dataclasses

import numpy as np

from redlab import analysis, config, continuous, oracle
from redlab.runner import integrator_config

cfg, red, run = config.scenario("two-classes", "continuous")
seeds = range(4)
icfg = dataclasses.replace(integrator_config(run), sample_every=4)

model = continuous.simulate_batch(cfg, red, icfg, run.t_end, list(seeds))
packets = [oracle.run(cfg, red, run.t_end, seed=s) for s in seeds]

# %%
# Queue statistics with every sender on, and with half of them off.
for label, windows in (("all on", analysis.ALL_ON_WINDOWS),
                       ("half off", analysis.HALF_OFF_WINDOWS)):
    for name, traces in (("model", model), ("packets", packets)):
        stats = np.array([analysis.queue_stats(t, windows=windows) for t in traces])
        mean, sd = stats.mean(axis=0)
        print(f"{label:>8} {name:>8}: mean {mean:5.1f}, sd {sd:4.1f}")

# %%
# The queue falls when the second class stops, and class 1 windows grow to
# take over its share of the link.
tr = packets[0]
for lo, hi in ((40, 75), (90, 125)):
    sel = (tr.t >= lo) & (tr.t < hi)
    print(f"[{lo}, {hi}) s: class-1 mean window {tr.W[sel, :5].mean():.1f} packets")

# %%
# The model queue runs about 4 packets high with every sender on. Part of
# that is granularity: the packet simulator only sends whole packets, so a
# sender keeps a little less in flight than its fluid window suggests.
