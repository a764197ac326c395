"""
When does RED drop?
===================

RED drops an arriving packet with a probability that grows with the packet
count since the last drop. At a fixed drop probability p the gap between
drops is uniform on [1/p, 2/p), with mean 3/(2p).
"""

# %%
import numpy as np

from redlab import RedParams, red_probability
from redlab.drops import DropMode, DropProcess, StreamBank, expected_interdrop

red = RedParams()
x = 75.0
p = red_probability(x, red)
print(f"p({x}) = {p}")

# %%
# Feed one packet per step to 2000 independent RED counters and record the
# packet count between successive drops.
members = 2000
proc = DropProcess(DropMode.FULL_RED, red, members, StreamBank.spawn(0, members))
since = np.zeros(members, dtype=int)
gaps = []
while sum(len(g) for g in gaps) < 50_000:
    fired = proc.step(np.full(members, x), None, 1.0) > 0
    since += 1
    gaps.append(since[fired].copy())
    since[fired] = 0
gaps = np.concatenate(gaps)
print(f"gaps in [{gaps.min()}, {gaps.max()}], mean {gaps.mean():.2f}, 3/(2p) = {1.5 / p:.1f}")

# %%
# When the averaged queue is still rising, the drop probability grows while
# RED counts packets. The expected-interdrop estimator linearises that rise.
for q0 in (50.5, 70.0, 100.0, 140.0):
    k = expected_interdrop(q0, 50.5, red)
    print(f"armed at x = 50.5 with q = {q0:5.1f}: next drop after ~{k:.0f} packets")
