"""Random discovery-time sums behind the lower bounds, and their thresholds.

Two reductions are covered. With a K-window chain and costly downlink,

    t_B = sum_b min_i min{h * sum_{k<=K/2} eta_{b,i,k}, tau_s * sum_{k<=K/2} mu_{b,i,k}},

and with the classic chain and costly uplink,

    y_{k,i} = min_j {h eta_{k,j} + 1[i != j] tau_w mu_{k,j} + y_{k-1,j}},   y_T = min_i y_{T,i}.

``eta`` counts oracle calls until a successful coin (geometric) and ``mu``
counts streamed coordinates until a target coordinate shows up. The
``t_bar_*`` functions give thresholds below which the sums fall with
probability at most delta; ``mc_verify`` checks that claim by simulation.
"""

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import binomtest

E4 = math.exp(4.0)


class BoundError(ValueError):
    def __init__(self, code, message):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message

    def __reduce__(self):
        return type(self), (self.code, self.message)


@dataclass(frozen=True)
class ConcParams:
    """Parameters of either reduction; ``K``/``B``/``tau_s`` for t_B, ``T``/``tau_w`` for y_T."""

    n: int
    d: int
    p_sigma: float
    h: float
    delta: float = 0.5
    K: int | None = None
    B: int | None = None
    T: int | None = None
    tau_s: float = 0.0
    tau_w: float = 0.0

    def __post_init__(self):
        if self.n < 1 or self.d < 1:
            raise ValueError("n and d must be positive")
        if not 0 < self.p_sigma <= 1:
            raise ValueError("p_sigma must lie in (0, 1]")
        if not 0 < self.delta <= 1:
            raise ValueError("delta must lie in (0, 1]")
        if self.K is not None and (self.K % 2 or self.K > self.d):
            raise ValueError("K must be even and at most d")

    @property
    def p_K(self):
        return 2.0 * self.K / self.d

    @property
    def p_d(self):
        return 2.0 / self.d

    def to_dict(self):
        return asdict(self)


def sample_eta(p_sigma, rng, size=None):
    """Oracle calls up to and including the first success: Geometric(p_sigma) on {1, 2, ...}."""
    if not 0 < p_sigma <= 1:
        raise ValueError("p_sigma must lie in (0, 1]")
    return rng.geometric(p_sigma, size=size)


def _k_subsets(d, K, rows, rng):
    """``rows`` uniform K-subsets of {1..d}, each sorted ascending."""
    if K == d:
        return np.tile(np.arange(1, d + 1), (rows, 1))
    if K * K <= d:
        out = rng.integers(1, d + 1, size=(rows, K))
        out.sort(axis=1)
        bad = np.flatnonzero((np.diff(out, axis=1) == 0).any(axis=1))
        while bad.size:
            redo = rng.integers(1, d + 1, size=(bad.size, K))
            redo.sort(axis=1)
            out[bad] = redo
            bad = bad[(np.diff(redo, axis=1) == 0).any(axis=1)]
        return out
    out = np.empty((rows, K), dtype=np.int64)
    step = max(1, 4_000_000 // d)
    for lo in range(0, rows, step):
        keys = rng.random((min(step, rows - lo), d))
        out[lo : lo + keys.shape[0]] = np.argpartition(keys, K - 1, axis=1)[:, :K] + 1
    out.sort(axis=1)
    return out


def sample_mu_block(d, K, count, rng):
    """Gaps between the first ``count`` hits of a K-coordinate window.

    A uniformly random order of the d coordinates is streamed one at a time;
    the returned values are the numbers of coordinates received between
    consecutive hits of the window (the first gap counts from the start).
    """
    if not 1 <= K <= d:
        raise ValueError("need 1 <= K <= d")
    if not 1 <= count <= K:
        raise ValueError("need 1 <= count <= K")
    pos = _k_subsets(d, K, 1, rng)[0]
    return np.diff(np.concatenate([[0], pos[:count]]))


def t_B_samples(params, trials, rng, chunk=2000):
    """``trials`` independent samples of t_B."""
    n, K, B, d = params.n, params.K, params.B, params.d
    if K is None or B is None:
        raise ValueError("t_B needs K and B")
    half = K // 2
    out = np.empty(trials)
    for lo in range(0, trials, chunk):
        m = min(chunk, trials - lo)
        eta = half + rng.negative_binomial(half, params.p_sigma, size=(m, B, n))
        comp = params.h * eta
        if params.tau_s == 0:
            stream = np.zeros((m, B, n))
        elif math.isinf(params.tau_s):
            stream = np.full((m, B, n), math.inf)
        else:
            # sum of the first K/2 gaps is the position of the (K/2)-th hit
            pos = _k_subsets(d, K, m * B * n, rng)[:, half - 1]
            stream = params.tau_s * pos.reshape(m, B, n).astype(float)
        out[lo : lo + m] = np.minimum(comp, stream).min(axis=2).sum(axis=1)
    return out


def t_B(params, rng):
    """One sample of t_B."""
    return float(t_B_samples(params, 1, rng)[0])


def y_T_samples(params, trials, rng, chunk=4000):
    """``trials`` independent samples of y_T."""
    n, T, d = params.n, params.T, params.d
    if T is None:
        raise ValueError("y_T needs T")
    out = np.empty(trials)
    for lo in range(0, trials, chunk):
        m = min(chunk, trials - lo)
        y = np.zeros((m, n))
        for _ in range(T):
            a = params.h * rng.geometric(params.p_sigma, size=(m, n)) + y
            if n == 1:
                y = a
                continue
            mu = rng.integers(1, d + 1, size=(m, n))
            b = a + params.tau_w * mu
            # min over j != i of b_j: the overall min unless i holds it
            order = np.argpartition(b, 1, axis=1)
            rows = np.arange(m)
            first = b[rows, order[:, 0]]
            second = b[rows, order[:, 1]]
            others = np.where(np.arange(n)[None, :] == order[:, :1], second[:, None], first[:, None])
            y = np.minimum(a, others)
        out[lo : lo + m] = y.min(axis=1)
    return out


def y_T(params, rng):
    """One sample of y_T."""
    return float(y_T_samples(params, 1, rng)[0])


def t_bar_lemma6(params):
    n, K, B = params.n, params.K, params.B
    num = B * K + math.log(params.delta)
    if num <= 0:
        raise BoundError("NONPOSITIVE_NUMERATOR", f"B*K + log(delta) = {num} <= 0")
    den = E4 * (2 * n) ** (2.0 / K) * (4.0 + (2.0 / K) * math.log(2 * n))
    return num / den * min(params.h / params.p_sigma, params.tau_s / params.p_K)


def t_bar_lemma8(params):
    n, T = params.n, params.T
    num = T - math.log(n) + math.log(params.delta)
    if num <= 0:
        raise BoundError("NONPOSITIVE_NUMERATOR", f"T - log n + log(delta) = {num} <= 0")
    h, tw, ps, pd = params.h, params.tau_w, params.p_sigma, params.p_d
    inner = max(h / (ps * n), tw / (pd * n), math.sqrt(h * tw) / math.sqrt(ps * pd * n), h, tw)
    return num / (32.0 * math.log(8 * n)) * min(inner, h / ps)


@dataclass
class MCReport:
    bound: str
    params: dict
    trials: int
    seed: int
    t_bar: float
    hits: int
    p_hat: float
    ci_low: float
    ci_high: float
    passed: bool

    def to_dict(self):
        out = asdict(self)
        out["pass"] = out.pop("passed")
        return out


def wilson_interval(hits, trials, confidence=0.99):
    ci = binomtest(int(hits), int(trials)).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


def mc_verify(bound, params, trials=10_000, seed=0):
    """Estimate P(sum <= t_bar) and pass iff the 99% Wilson upper edge is <= delta."""
    if trials < 1000:
        raise ValueError("mc_verify needs at least 1000 trials")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), 6 if bound == "lemma6" else 8])))
    if bound == "lemma6":
        tb = t_bar_lemma6(params)
        samples = t_B_samples(params, trials, rng)
    elif bound == "lemma8":
        tb = t_bar_lemma8(params)
        samples = y_T_samples(params, trials, rng)
    else:
        raise ValueError(f"unknown bound {bound!r}")
    hits = int(np.count_nonzero(samples <= tb))
    lo, hi = wilson_interval(hits, trials)
    return MCReport(
        bound=bound, params=params.to_dict(), trials=trials, seed=int(seed), t_bar=tb,
        hits=hits, p_hat=hits / trials, ci_low=lo, ci_high=hi, passed=hi <= params.delta,
    )


def t_B_params(inst, B=None, h=1.0, tau_s=1.0, delta=0.5):
    """t_B parameters at a K-window instance; B defaults to floor(T/K)."""
    K = inst.K
    return ConcParams(
        n=inst.n, d=inst.d, K=K, B=inst.T // K if B is None else B,
        p_sigma=inst.p_sigma, h=h, tau_s=tau_s, delta=delta,
    )


def y_T_params(inst, h=1.0, tau_w=1.0, delta=0.5):
    return ConcParams(n=inst.n, d=inst.d, T=inst.T, p_sigma=inst.p_sigma, h=h, tau_w=tau_w, delta=delta)


THEORY_MODELS = ("eq3", "eq4", "eq5", "eq8-min", "eq8-local")


def theory_time(model, L, Delta, eps, sigma2, n, d, h, tau_s, tau_w):
    """Predicted runtime with all hidden constants set to one."""
    r = L * Delta / eps
    noise = sigma2 / eps
    if model == "eq3":
        return h * (r + noise * r / n) + tau_w * d * r
    local = h * r + h * noise * r
    if model == "eq8-local":
        return local
    eq4 = (h * (1 + noise / n) * r + tau_w * (d / n + 1) * r
           + math.sqrt(d * tau_w * h * noise / n) * r)
    if model == "eq4":
        return eq4
    eq5 = eq4 + tau_s * d * r
    if model == "eq5":
        return eq5
    if model == "eq8-min":
        return min(eq5, local)
    raise ValueError(f"unknown model {model!r}; choose from {THEORY_MODELS}")
