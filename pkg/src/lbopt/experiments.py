"""Ready-made experiments: simulator runs against predicted times, the
operating points for the concentration checks, and the coordinate-chasing
lower-bound demonstration.
"""

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import algorithms as al
from . import lowerbound as lb
from . import simulator as sim
from . import worstcase as wc

THEORY_FOR = {
    "batch_sync_sgd": lambda tau_s: "eq3",
    "batch_qsgd": lambda tau_s: "eq5" if tau_s > 0 else "eq4",
    "local_sgd": lambda tau_s: "eq8-local",
    "greedy_chaser": lambda tau_s: "eq8-min",
}

MULTIPLIER_KEYS = {
    "batch_sync_sgd": ("batch_mult", "step_mult"),
    "batch_qsgd": ("t_mult", "step_mult"),
    "local_sgd": ("step_mult",),
    "greedy_chaser": ("level",),
}


def workers():
    """Process count from LBOPT_THREADS (default 1, meaning run inline)."""
    try:
        return max(1, int(os.environ.get("LBOPT_THREADS", "1")))
    except ValueError:
        return 1


def pmap(fn, items):
    """Ordered map over independent units, in worker processes when allowed."""
    items = list(items)
    procs = min(workers(), len(items))
    if procs <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=procs) as ex:
        return list(ex.map(fn, items))


@dataclass(frozen=True)
class Point:
    """One simulator configuration; ``T`` fixes the chain length of a classic instance."""

    n: int
    d: int
    h: float
    tau_s: float
    tau_w: float
    sigma2_over_eps: float = 0.0
    T: int = 2
    L: float = 1.0
    eps: float = 1e-3
    variant: str = "classic"

    def instance(self):
        return make_instance(self.L, self.eps, self.sigma2_over_eps * self.eps, self.n, self.d,
                             self.variant, T=self.T)

    def timing(self):
        return sim.TimingModel(self.h, self.tau_s, self.tau_w)


def make_instance(L, eps, sigma2, n, d, variant="classic", T=None, Delta=None, K=None, a=None):
    """Instance from either an explicit Delta or a target chain length T.

    For the new chain, K and a default to the worker-dependent window.
    """
    if (T is None) == (Delta is None):
        raise ValueError("give exactly one of T and Delta")
    if variant == "classic":
        K, a = 1, math.e
    else:
        K0, a0 = wc.proof_window(n)
        K = K0 if K is None else K
        a = a0 if a is None else a
    if Delta is None:
        Delta = wc.delta_for_chain(T, L, eps, K, a, variant)
    return wc.build_instance(L, Delta, eps, n, sigma2, d, variant=variant, K=K, a=a)


def theory_for(alg, inst, timing):
    model = THEORY_FOR[alg](timing.tau_s)
    return lb.theory_time(model, inst.L, inst.Delta, inst.eps, inst.sigma2, inst.n, inst.d,
                          timing.h, timing.tau_s, timing.tau_w)


def run_unit(alg, inst, timing, seed=0, protocol="P2", budget_factor=50.0, multipliers=None, stop="eps"):
    """Simulate ``alg`` with a budget of ``budget_factor`` times its predicted time.

    Returns (RunRecord, predicted time).
    """
    mult = {k: v for k, v in (multipliers or {}).items() if k in MULTIPLIER_KEYS[alg]}
    hooks = al.ALGORITHMS[alg](inst, timing, **mult)
    theory = theory_for(alg, inst, timing)
    rec = sim.run(protocol, inst, timing, hooks, budget=budget_factor * theory, seed=seed, stop=stop)
    return rec, theory


@dataclass
class PointResult:
    alg: str
    point: Point
    seed: int
    record: sim.RunRecord
    theory_time: float

    @property
    def ratio(self):
        t = self.record.time_to_eps
        return None if t is None else t / self.theory_time


def run_point(alg, point, seed=0, protocol="P2", budget_factor=50.0, multipliers=None):
    rec, theory = run_unit(alg, point.instance(), point.timing(), seed, protocol, budget_factor, multipliers)
    return PointResult(alg, point, seed, rec, theory)


# twelve configurations spanning worker count, noise, both channel costs and h;
# noise above 1058 eps makes the classic oracle genuinely random (p_sigma < 1)
BAND_GRID = (
    Point(n=1, d=8, h=1.0, tau_s=0.0, tau_w=0.0),
    Point(n=4, d=8, h=1.0, tau_s=0.0, tau_w=0.0, sigma2_over_eps=100.0),
    Point(n=8, d=64, h=1.0, tau_s=0.0, tau_w=0.01, sigma2_over_eps=400.0),
    Point(n=2, d=32, h=1.0, tau_s=0.01, tau_w=0.01, sigma2_over_eps=50.0),
    Point(n=16, d=16, h=0.5, tau_s=0.0, tau_w=0.0, sigma2_over_eps=1100.0),
    Point(n=4, d=128, h=1.0, tau_s=0.0, tau_w=0.001, sigma2_over_eps=600.0),
    Point(n=32, d=256, h=1.0, tau_s=0.0, tau_w=0.05, sigma2_over_eps=100.0),
    Point(n=8, d=512, h=1.0, tau_s=0.001, tau_w=0.002),
    Point(n=1, d=16, h=2.0, tau_s=0.0, tau_w=0.1, sigma2_over_eps=10.0),
    Point(n=2, d=64, h=0.1, tau_s=0.005, tau_w=0.005),
    Point(n=32, d=32, h=1.0, tau_s=0.0, tau_w=0.0, sigma2_over_eps=300.0),
    Point(n=8, d=2048, h=1.0, tau_s=0.0001, tau_w=0.01, sigma2_over_eps=200.0),
)

BAND_ALGS = ("batch_sync_sgd", "batch_qsgd", "local_sgd")


def _band_unit(args):
    alg, point, seed = args
    return run_point(alg, point, seed=seed)


def band_check(points=BAND_GRID, algs=BAND_ALGS, band=(1 / 20, 20.0), seed=0):
    """Run every algorithm at every point; returns (PointResult, within band) pairs."""
    res = pmap(_band_unit, [(alg, p, seed) for p in points for alg in algs])
    return [(r, r.ratio is not None and band[0] <= r.ratio <= band[1]) for r in res]


# noise-dominated, free communication: the batch halves when n doubles
STAT_POINT = Point(n=4, d=8, h=1.0, tau_s=0.0, tau_w=0.0, sigma2_over_eps=4000.0)
# broadcast and upload of a long vector dominate every round
CHANNEL_POINT = Point(n=2, d=2048, h=1.0, tau_s=0.01, tau_w=0.01)


def scaling_check(point, factor, alg="batch_sync_sgd", seed=0):
    """Time at ``point`` divided by the time with ``factor`` times as many workers."""
    base = run_point(alg, point, seed=seed).record.time_to_eps
    more = run_point(alg, replace(point, n=point.n * factor), seed=seed).record.time_to_eps
    return base / more


# concentration operating points


def _sigma2_for(target_p, eps, gamma_inf):
    return 2.0 * eps * gamma_inf**2 / target_p


def broadcast_operating_point(n, delta=0.5, blocks=4, p_sigma_target=0.05, h=1.0, tau_s=1.0, L=1.0, eps=1e-3):
    """Instance with the window tied to n, B = blocks, d = 4T, and the matching t_B parameters."""
    K, a = wc.proof_window(n)
    T = blocks * K
    c = wc.constants(K, a, "new")
    inst = wc.build_instance(L, wc.delta_for_chain(T, L, eps, K, a, "new"), eps, n,
                             _sigma2_for(p_sigma_target, eps, c.gamma_inf), 4 * T, variant="new")
    return inst, lb.t_B_params(inst, h=h, tau_s=tau_s, delta=delta)


def upload_operating_point(n, delta=0.5, T=60, p_sigma_target=0.1, h=1.0, tau_w=1.0, L=1.0, eps=1e-3):
    """Classic-chain instance with d = 4T and the matching y_T parameters."""
    inst = wc.build_instance(L, wc.delta_for_chain(T, L, eps), eps, n,
                             _sigma2_for(p_sigma_target, eps, wc.CLASSIC_GAMMA_INF), 4 * T, variant="classic")
    return inst, lb.y_T_params(inst, h=h, tau_w=tau_w, delta=delta)


# lower-bound demonstration


@dataclass
class ChaserReport:
    n: int
    T: int
    K: int
    runs: int
    t_bar: float
    discovery_T: list
    time_to_eps: list
    fraction_late: float
    eps_before_discovery: int
    passed: bool

    def to_dict(self):
        return asdict(self)


def _chaser_unit(args):
    inst, timing, level, budget, seed = args
    hooks = al.greedy_chaser(inst, timing, level=level)
    return sim.run("P1", inst, timing, hooks, budget=budget, seed=seed, stop="both")


def chaser_experiment(n=8, runs=200, seed=0, blocks=4, p_sigma_target=0.2, h=1.0, tau_s=1.0,
                      delta=0.5, level=10.0, budget=1e5, required=0.45):
    """Run the greedy chaser with costly broadcasts and compare the time to
    reach coordinate T with half of the t_B threshold."""
    inst, params = broadcast_operating_point(n, delta, blocks, p_sigma_target, h, tau_s)
    t_bar = lb.t_bar_lemma6(params)
    timing = sim.TimingModel(h, tau_s, 0.0)
    recs = pmap(_chaser_unit, [(inst, timing, level, budget, seed + r) for r in range(runs)])
    disc = [float(rec.discovery_times[-1]) for rec in recs]
    tte = [rec.time_to_eps for rec in recs]
    early_eps = sum(1 for t, dT in zip(tte, disc) if t is not None and t < dT)
    late = float(np.mean(np.asarray(disc) >= t_bar / 2))
    return ChaserReport(
        n=n, T=inst.T, K=inst.K, runs=runs, t_bar=t_bar, discovery_T=disc, time_to_eps=tte,
        fraction_late=late, eps_before_discovery=early_eps,
        passed=late >= required and early_eps == 0,
    )
