"""
Tracking the queue from one window
==================================

A particle filter runs the discrete model with full RED for each particle
and reweights the ensemble whenever a noisy window reading of sender 1
arrives. The truth is a packet-level run of the two-class network.
"""

# %%
from redlab import config, estimation, oracle

cfg, red, _ = config.scenario("two-classes")
truth = oracle.run(cfg, red, 60.0, seed=100, sample_dt=0.05)

res = estimation.run_filter(truth, cfg, red, observe=(0,), every=0.5,
                            n_particles=300, seed=0)

# %%
# Estimate against truth every 5 s, with the ensemble spread.
for i in range(9, len(res.t), 10):
    print(f"t = {res.t[i]:5.1f} s: true q {res.q_true[i]:5.1f}, "
          f"estimate {res.q_est[i]:5.1f} +- {res.q_std[i]:4.1f}")

# %%
# Error over the last 30 s against always guessing the prior mean.
t0 = res.t[-1] - 30.0
print(f"filter RMSE {res.rmse(t0):.1f}, prior-mean RMSE {res.baseline_rmse(t0):.1f}")
print(res.diagnostics)

# %%
# The estimate settles about 20 packets above the truth. With ten senders the
# discrete model's queue equilibrium is higher than the packet simulator's,
# and a window reading of one sender cannot correct that bias, so here the
# filter does worse than the prior-mean guess.
