"""
Monte Carlo check of the discovery-time bounds
==============================================

Two random times control the lower bounds: t_B, the time until B windows of
K coordinates are discovered through random sparse broadcasts, and y_T, the
time until T coordinates leak through noisy uploads. Each has a threshold
t_bar with P(time <= t_bar) <= delta; we estimate that probability and put a
99% Wilson interval around it.
"""

import numpy as np

from lbopt import experiments as ex
from lbopt import lowerbound as lb

for n in (2, 8):
    inst, params = ex.broadcast_operating_point(n, delta=0.1)
    rep = lb.mc_verify("lemma6", params, trials=10_000, seed=0)
    samples = lb.t_B_samples(params, 2000, np.random.default_rng(1))
    print(f"t_B  n={n:2d} K={params.K} B={params.B} d={params.d}: t_bar {rep.t_bar:9.1f}  "
          f"median {np.median(samples):9.1f}  p_hat {rep.p_hat:.4f}  upper {rep.ci_high:.4f}  pass {rep.passed}")

for n in (1, 4):
    inst, params = ex.upload_operating_point(n, delta=0.1)
    rep = lb.mc_verify("lemma8", params, trials=10_000, seed=0)
    print(f"y_T  n={n:2d} T={params.T} d={params.d}: t_bar {rep.t_bar:9.1f}  "
          f"p_hat {rep.p_hat:.4f}  upper {rep.ci_high:.4f}  pass {rep.passed}")

print("Wilson interval for 0 of 10000:", lb.wilson_interval(0, 10_000))
