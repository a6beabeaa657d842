"""
Simulated distributed training
==============================

An event-driven simulator runs one server and n workers. Each gradient takes
h seconds, each coordinate sent server to worker costs tau_s and worker to
server costs tau_w. We compare the measured time to reach an eps-stationary
point with the predicted rate for each method.
"""

from lbopt import experiments as ex

point = ex.Point(n=4, d=64, h=1.0, tau_s=0.001, tau_w=0.01, sigma2_over_eps=200.0)
for alg in ex.BAND_ALGS:
    res = ex.run_point(alg, point, seed=0)
    rec = res.record
    print(f"{alg:15s} time {rec.time_to_eps:10.1f}  predicted {res.theory_time:10.1f}  "
          f"ratio {res.ratio:.3f}  gradients {rec.grads_computed}  uploaded coords {rec.coords_w2s}")

# statistical regime: doubling the workers roughly halves the time
print("speedup from 4 to 8 workers:", round(ex.scaling_check(ex.STAT_POINT, 2), 2))
# channel regime: more workers do not help once every round is bandwidth bound
print("change from 2 to 8 workers:", round(ex.scaling_check(ex.CHANNEL_POINT, 4), 2))

# the whole grid of band checks (takes a few minutes on one core)
# for res, ok in ex.band_check():
#     print(res.alg, res.point, round(res.ratio, 3), ok)
