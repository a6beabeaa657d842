"""Discrete-event simulation of the two server/worker communication protocols.

Protocol ``"P1"``: workers share stochastic gradients with the server for
free, and the server pays ``tau_s`` seconds per coordinate to send anything
back. Protocol ``"P2"``: workers also pay ``tau_w`` per coordinate to upload.
Each worker computes one stochastic gradient at a time in exactly ``h``
seconds. Every (direction, worker) channel is FIFO and carries one message
at a time; server-side work takes no time.

The simulator tracks, for every node, the set of coordinates it has seen
nonzero, and rejects any point an algorithm constructs outside that set.
The true squared gradient norm of every constructed point is evaluated on the
side to find the first time an eps-stationary point exists.
"""

import heapq
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import oracle
from .compressors import Identity

GRAD_DONE, S2W_ARRIVE, W2S_ARRIVE = 0, 1, 2

STREAM_WORKER, STREAM_SERVER = 1, 2

# more events than this at one clock value means a zero-duration loop
ZENO_LIMIT = 1_000_000


class SimulationError(RuntimeError):
    def __init__(self, code, message):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message

    def __reduce__(self):
        return type(self), (self.code, self.message)


class ZeroRespectViolation(SimulationError):
    def __init__(self, message):
        super().__init__("ZERO_RESPECT_VIOLATION", message)

    def __reduce__(self):
        return type(self), (self.message,)


@dataclass(frozen=True)
class TimingModel:
    h: float
    tau_s: float = 0.0
    tau_w: float = 0.0

    def __post_init__(self):
        for name in ("h", "tau_s", "tau_w"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be finite and nonnegative, got {v!r}")


@dataclass
class ComputeRequest:
    """Ask a worker for the sum of ``count`` stochastic gradients at ``point``."""

    point: np.ndarray
    count: int = 1


@dataclass
class Send:
    """Send ``repeats`` independent compressions of ``point`` back to back."""

    point: np.ndarray
    compressor: object = field(default_factory=Identity)
    repeats: int = 1


class NodeInfo:
    """What one node knows: the coordinates it has seen nonzero and its random stream."""

    def __init__(self, name, index, d, rng):
        self.name = name
        self.index = index
        self.known = np.zeros(d, dtype=bool)
        self.rng = rng

    def support(self):
        return np.flatnonzero(self.known) + 1


class AlgorithmHooks:
    """Base class for algorithms; every hook is optional.

    Worker indices are 0-based. ``on_server_update`` receives the workers whose
    downlink channel is idle and returns ``{i: Send}``.
    """

    def start(self, sim):
        pass

    def on_worker_idle(self, i, info):
        return None

    def on_gradient(self, i, info, g, count):
        pass

    def on_server_receive(self, i, vec, info, count=1):
        """``count`` is the number of gradients (P1) or compressed messages (P2) summed in ``vec``."""

    def on_server_update(self, idle, info):
        return {}

    def on_worker_message(self, i, info, vec):
        pass

    def on_worker_upload(self, i, info):
        return None


@dataclass
class RunRecord:
    time_to_eps: float | None
    best_grad_sq: float
    grads_computed: int
    coords_s2w: int
    coords_w2s: int
    discovery_times: np.ndarray
    end_time: float = 0.0
    points: int = 0
    violation: dict | None = None

    def to_dict(self):
        return {
            "time_to_eps": self.time_to_eps,
            "best_grad_sq": self.best_grad_sq,
            "grads_computed": self.grads_computed,
            "coords_s2w": self.coords_s2w,
            "coords_w2s": self.coords_w2s,
            "discovery_times": [None if math.isinf(t) else t for t in self.discovery_times.tolist()],
            "end_time": self.end_time,
            "points": self.points,
            "violation": self.violation,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def node_rng(seed, role, index):
    ss = np.random.SeedSequence([int(seed), role, index])
    return np.random.Generator(np.random.Philox(ss))


def _nz_support(vec):
    return np.flatnonzero(vec)


class Simulator:
    def __init__(self, protocol, inst, timing, alg, budget, seed=0, stop="eps",
                 trace=False, strict=True, max_events=None):
        if protocol not in ("P1", "P2"):
            raise ValueError(f"protocol must be 'P1' or 'P2', got {protocol!r}")
        if not budget > 0:
            raise ValueError("budget must be positive")
        if stop not in ("eps", "discovery", "both", "budget"):
            raise ValueError(f"unknown stop mode {stop!r}")
        self.protocol = protocol
        self.inst = inst
        self.timing = timing
        self.alg = alg
        self.budget = float(budget)
        self.seed = seed
        self.stop = stop
        self.strict = strict
        self.max_events = max_events
        self.trace = [] if trace else None
        n, d = inst.n, inst.d
        self.n, self.d = n, d
        self.server = NodeInfo("server", -1, d, node_rng(seed, STREAM_SERVER, 0))
        self.workers = [NodeInfo(f"worker:{i}", i, d, node_rng(seed, STREAM_WORKER, i)) for i in range(n)]
        self.clock = 0.0
        self._heap = []
        self._seq = 0
        self._busy = [False] * n
        self._down_busy = [False] * n
        self._up_busy = [False] * n
        self._log_index = 0
        self._point_id = 0
        self._last_point = None
        self._last_gsq = None
        self.discovered = np.zeros(inst.T, dtype=bool)
        self.record = RunRecord(
            time_to_eps=None, best_grad_sq=math.inf, grads_computed=0,
            coords_s2w=0, coords_w2s=0, discovery_times=np.full(inst.T, math.inf),
        )

    # bookkeeping

    def _log(self, node, kind, payload_size=0, point_id=None, support=()):
        if self.trace is not None:
            self.trace.append({
                "t": self.clock, "node": node.name, "kind": kind,
                "payload_size": int(payload_size), "point_id": point_id,
                "support": [int(j) + 1 for j in support],
            })
        self._log_index += 1

    def _check(self, node, kind, vec):
        """Zero-respecting audit for a vector ``node`` is about to emit."""
        supp = _nz_support(vec)
        bad = supp[~node.known[supp]]
        if bad.size:
            report = {
                "t": self.clock, "node": node.name, "kind": kind,
                "index": self._log_index, "coords": [int(j) + 1 for j in bad[:10]],
            }
            if self.record.violation is None:
                self.record.violation = report
            if self.strict:
                raise ZeroRespectViolation(
                    f"{node.name} emitted coordinates {report['coords']} it has never seen at t={self.clock}")
        return supp

    def _learn(self, node, supp, when=None):
        node.known[supp] = True
        inchain = supp[supp < self.inst.T]
        if inchain.size:
            new = inchain[~self.discovered[inchain]]
            t = self.clock if when is None else when
            if new.size:
                self.discovered[new] = True
            dt = self.record.discovery_times
            dt[inchain] = np.minimum(dt[inchain], t)

    def _register(self, point, g=None):
        """Evaluate the true gradient norm of a newly constructed point."""
        if point is self._last_point:
            gsq = self._last_gsq
        else:
            if g is None:
                g = self.inst.grad_scaled(point)
            gsq = float(g @ g)
            self._last_point, self._last_gsq = point, gsq
        self._point_id += 1
        self.record.points += 1
        if gsq < self.record.best_grad_sq:
            self.record.best_grad_sq = gsq
        if gsq <= self.inst.eps and self.record.time_to_eps is None:
            self.record.time_to_eps = self.clock
        return self._point_id

    def _push(self, t, kind, worker, payload):
        if t < self.clock:
            raise SimulationError("CLOCK", "event scheduled in the past")
        self._seq += 1
        heapq.heappush(self._heap, (t, kind, worker, self._seq, payload))

    # actions requested by the algorithm

    def _start_compute(self, i, req):
        w = self.workers[i]
        point = np.asarray(req.point, dtype=np.float64)
        if req.count < 1:
            raise ValueError("ComputeRequest.count must be at least 1")
        supp = self._check(w, "compute", point)
        parts = oracle.split_gradient(self.inst, point)
        pid = self._register(point, parts[0])
        self._log(w, "compute", 0, pid, supp)
        res = oracle.draw_sum(self.inst, point, req.count, w.rng, grads=parts)
        self._busy[i] = True
        t0 = self.clock
        self._push(t0 + req.count * self.timing.h, GRAD_DONE, i, (point, res, t0, req.count))

    def _start_send(self, sender, i, send, kind, tau):
        point = np.asarray(send.point, dtype=np.float64)
        supp = self._check(sender, "send" if kind == S2W_ARRIVE else "upload", point)
        pid = self._register(point) if kind == S2W_ARRIVE else None
        t = self.clock
        reps = max(1, int(send.repeats))
        if reps > 1 and hasattr(send.compressor, "burst"):
            # a burst is delivered as a whole once its last coordinate lands
            msgs = [send.compressor.burst(point, reps, sender.rng)]
        else:
            msgs = [send.compressor(point, sender.rng) for _ in range(reps)]
        for m in msgs:
            self._check(sender, "message", m.decode(self.d))
        total = sum(m.payload_size for m in msgs)
        self._log(sender, "send" if kind == S2W_ARRIVE else "upload", total, pid, supp)
        for k, m in enumerate(msgs):
            t += tau * m.payload_size
            self._push(t, kind, i, (m, k == len(msgs) - 1))
        if kind == S2W_ARRIVE:
            self._down_busy[i] = True
        else:
            self._up_busy[i] = True

    # polling

    def _poll_worker(self, i):
        if not self._busy[i]:
            req = self.alg.on_worker_idle(i, self.workers[i])
            if req is not None:
                self._start_compute(i, req)
        if self.protocol == "P2" and not self._up_busy[i]:
            up = self.alg.on_worker_upload(i, self.workers[i])
            if up is not None:
                self._start_send(self.workers[i], i, up, W2S_ARRIVE, self.timing.tau_w)

    def _poll_server(self):
        idle = [i for i in range(self.n) if not self._down_busy[i]]
        if not idle:
            return
        sends = self.alg.on_server_update(idle, self.server) or {}
        for i in sorted(sends):
            if self._down_busy[i]:
                raise SimulationError("CHANNEL_BUSY", f"downlink to worker {i} is busy")
            self._start_send(self.server, i, sends[i], S2W_ARRIVE, self.timing.tau_s)

    def _done(self):
        r = self.record
        eps_hit = r.time_to_eps is not None
        disc_hit = bool(self.discovered[-1])
        return {
            "eps": eps_hit,
            "discovery": disc_hit,
            "both": eps_hit and disc_hit,
            "budget": False,
        }[self.stop]

    # main loop

    def run(self):
        self.alg.start(self)
        for i in range(self.n):
            self._poll_worker(i)
        self._poll_server()
        events = 0
        same_time = 0
        while self._heap and not self._done():
            t, kind, i, _, payload = heapq.heappop(self._heap)
            if t > self.budget:
                break
            same_time = same_time + 1 if t == self.clock else 0
            if same_time > ZENO_LIMIT:
                raise SimulationError("ZENO", f"more than {ZENO_LIMIT} events at t={t}")
            self.clock = t
            events += 1
            if self.max_events is not None and events > self.max_events:
                break
            if kind == GRAD_DONE:
                self._on_grad_done(i, payload)
            elif kind == S2W_ARRIVE:
                self._on_s2w(i, payload)
            else:
                self._on_w2s(i, payload)
        self.record.end_time = self.clock
        return self.record

    def _on_grad_done(self, i, payload):
        point, res, t0, count = payload
        w = self.workers[i]
        self._busy[i] = False
        self.record.grads_computed += count
        total = res.total
        supp = _nz_support(total)
        # coordinates revealed by a masked draw became available at that draw
        newc = supp[~w.known[supp]]
        if newc.size:
            cut = int(np.flatnonzero(point)[-1]) + 1 if point.any() else 0
            early = newc[newc < cut]
            late = newc[newc >= cut]
            self._learn(w, early, t0 + self.timing.h)
            if late.size:
                k = res.first_reveal if res.first_reveal is not None else 1
                self._learn(w, late, t0 + k * self.timing.h)
        self._log(w, "grad", 0, None, supp)
        self.alg.on_gradient(i, w, total, count)
        if self.protocol == "P1":
            self._learn(self.server, supp)
            self._log(self.server, "share", 0, None, supp)
            self.alg.on_server_receive(i, total, self.server, count)
            self._poll_worker(i)
            self._poll_server()
        else:
            self._poll_worker(i)

    def _on_s2w(self, i, payload):
        msg, last = payload
        w = self.workers[i]
        vec = msg.decode(self.d)
        self.record.coords_s2w += msg.payload_size
        supp = _nz_support(vec)
        self._learn(w, supp)
        self._log(w, "deliver", msg.payload_size, None, supp)
        if last:
            self._down_busy[i] = False
        self.alg.on_worker_message(i, w, vec)
        self._poll_worker(i)
        if last:
            self._poll_server()

    def _on_w2s(self, i, payload):
        msg, last = payload
        vec = msg.decode(self.d)
        self.record.coords_w2s += msg.payload_size
        supp = _nz_support(vec)
        self._learn(self.server, supp)
        self._log(self.server, "deliver", msg.payload_size, None, supp)
        if last:
            self._up_busy[i] = False
        self.alg.on_server_receive(i, vec, self.server, getattr(msg, "rows", 1))
        self._poll_server()
        if last:
            self._poll_worker(i)


def run(protocol, inst, timing, alg, budget, seed=0, **kw):
    """Simulate one run and return its ``RunRecord`` (see ``Simulator`` for options)."""
    return Simulator(protocol, inst, timing, alg, budget, seed, **kw).run()


@dataclass
class AuditReport:
    ok: bool
    index: int | None = None
    event: dict | None = None


def audit_zero_respecting(trace):
    """Replay a trace and report the first emission outside the emitter's known support."""
    known = {}
    for k, ev in enumerate(trace):
        seen = known.setdefault(ev["node"], set())
        supp = ev.get("support", [])
        if ev["kind"] in ("compute", "send", "upload"):
            if not seen.issuperset(supp):
                return AuditReport(False, k, ev)
        else:
            seen.update(supp)
    return AuditReport(True)


def write_trace(trace, path):
    with open(path, "w") as fh:
        for ev in trace:
            fh.write(json.dumps(ev, sort_keys=True) + "\n")


def read_trace(path):
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
