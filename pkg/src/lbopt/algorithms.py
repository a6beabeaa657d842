"""Upper-bound methods and a stress algorithm, written as simulator hooks.

All step sizes and batch sizes use unit constants (with ceilings), and each
method exposes multipliers so experiments can rescale them. Algorithms never
see true gradients; the simulator decides when an eps-stationary point exists.
"""

import math
from dataclasses import dataclass

import numpy as np

from .compressors import Identity, RandK
from .simulator import AlgorithmHooks, ComputeRequest, Send


def _ceil(x):
    return max(1, math.ceil(x - 1e-12))


class _Synchronous(AlgorithmHooks):
    """Shared skeleton: workers compute a batch at the current iterate, the
    server averages what it receives and broadcasts the next iterate."""

    def __init__(self, inst, timing, b, gamma):
        self.inst = inst
        self.timing = timing
        self.b = int(b)
        self.gamma = float(gamma)
        self.iterates = 0

    def start(self, sim):
        self.protocol = sim.protocol
        n, d = self.inst.n, self.inst.d
        self.n = n
        self.x = np.zeros(d)
        self.worker_x = [self.x] * n
        self.ready = [True] * n
        self.outbox = [None] * n
        self.acc = np.zeros(d)
        self.received = 0
        self.pending = set()

    def on_worker_idle(self, i, info):
        if self.ready[i]:
            self.ready[i] = False
            return ComputeRequest(self.worker_x[i], self.b)
        return None

    def on_gradient(self, i, info, g, count):
        if self.protocol == "P2":
            self.outbox[i] = g

    def on_worker_message(self, i, info, vec):
        self.worker_x[i] = vec
        self.ready[i] = True

    def on_server_update(self, idle, info):
        out = {}
        for i in idle:
            if i in self.pending:
                self.pending.discard(i)
                out[i] = Send(self.x, Identity())
        return out

    def _step(self, denom):
        self.x = self.x - (self.gamma / denom) * self.acc
        self.acc = np.zeros_like(self.acc)
        self.received = 0
        self.iterates += 1
        self.pending = set(range(self.n))


class BatchSyncSGD(_Synchronous):
    def on_worker_upload(self, i, info):
        g = self.outbox[i]
        if g is None:
            return None
        self.outbox[i] = None
        return Send(g, Identity())

    def on_server_receive(self, i, vec, info, count=1):
        self.acc += vec
        self.received += 1
        if self.received == self.n:
            self._step(self.n * self.b)


def batch_sync_sgd(inst, timing, batch_mult=1.0, step_mult=1.0):
    """Synchronized SGD with batch b = ceil(sigma^2 / (eps n)) and step 1/(2L)."""
    b = _ceil(batch_mult * inst.sigma2 / (inst.eps * inst.n)) if inst.sigma2 > 0 else 1
    return BatchSyncSGD(inst, timing, b, step_mult / (2.0 * inst.L))


@dataclass(frozen=True)
class QsgdParams:
    b: int
    m: int
    gamma: float
    t_star: float


def qsgd_params(inst, timing, t_mult=1.0, step_mult=1.0):
    h, tw = timing.h, timing.tau_w
    n, d = inst.n, inst.d
    noise = inst.sigma2 / inst.eps
    t_star = t_mult * max(h, tw, tw * d / n, h * noise / n, math.sqrt(d * tw * h * noise / n))
    b = _ceil(t_star / h) if h > 0 else 1
    m = _ceil(t_star / tw) if tw > 0 else 1
    return QsgdParams(b=b, m=m, gamma=step_mult / (2.0 * inst.L), t_star=t_star)


class BatchQSGD(_Synchronous):
    """Workers upload ``m`` independent Rand1 compressions of their batch sum."""

    def __init__(self, inst, timing, params):
        super().__init__(inst, timing, params.b, params.gamma)
        self.params = params
        self.m = params.m
        self.compress = timing.tau_w > 0

    def on_worker_upload(self, i, info):
        g = self.outbox[i]
        if g is None:
            return None
        self.outbox[i] = None
        if self.compress:
            return Send(g, RandK(1), repeats=self.m)
        return Send(g, Identity())

    def on_server_receive(self, i, vec, info, count=1):
        self.acc += vec
        if self.protocol == "P1":
            # uploads are free here, so the server sees the exact batch sums
            self.received += 1
            if self.received == self.n:
                self._step(self.n * self.b)
            return
        per = self.m if self.compress else 1
        self.received += count
        if self.received == self.n * per:
            self._step(self.n * self.b * per)


def batch_qsgd(inst, timing, t_mult=1.0, step_mult=1.0):
    return BatchQSGD(inst, timing, qsgd_params(inst, timing, t_mult, step_mult))


class LocalSGD(AlgorithmHooks):
    """Worker 0 runs plain SGD on its own; nobody communicates."""

    def __init__(self, inst, timing, gamma):
        self.inst = inst
        self.gamma = float(gamma)
        self.iterates = 0

    def start(self, sim):
        self.x = np.zeros(self.inst.d)
        self.ready = True

    def on_worker_idle(self, i, info):
        if i != 0 or not self.ready:
            return None
        self.ready = False
        return ComputeRequest(self.x, 1)

    def on_gradient(self, i, info, g, count):
        self.x = self.x - self.gamma * g
        self.iterates += 1
        self.ready = True


def local_sgd(inst, timing, step_mult=1.0):
    """Single-worker SGD with step min{1/(2L), eps/(2 L sigma^2)}."""
    gamma = 1.0 / (2.0 * inst.L)
    if inst.sigma2 > 0:
        gamma = min(gamma, inst.eps / (2.0 * inst.L * inst.sigma2))
    return LocalSGD(inst, timing, step_mult * gamma)


class GreedyChaser(AlgorithmHooks):
    """Every node sits at ``level * lambda`` on each coordinate it knows.

    Workers keep drawing stochastic gradients at that point, and the server
    keeps streaming one random coordinate of its own point to every worker.
    Once all T chain coordinates are known the point is eps-stationary, so the
    run measures how fast information can spread.
    """

    def __init__(self, inst, timing, level=10.0):
        self.inst = inst
        self.value = level * inst.lam
        self._rand1 = RandK(1)

    def _point(self, info):
        return np.where(info.known, self.value, 0.0)

    def on_worker_idle(self, i, info):
        return ComputeRequest(self._point(info), 1)

    def on_worker_upload(self, i, info):
        return Send(self._point(info), self._rand1)

    def on_server_update(self, idle, info):
        p = self._point(info)
        return {i: Send(p, self._rand1) for i in idle}


def greedy_chaser(inst, timing, level=10.0):
    return GreedyChaser(inst, timing, level)


ALGORITHMS = {
    "batch_sync_sgd": batch_sync_sgd,
    "batch_qsgd": batch_qsgd,
    "local_sgd": local_sgd,
    "greedy_chaser": greedy_chaser,
}
