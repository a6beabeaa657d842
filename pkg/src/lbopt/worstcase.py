"""Chain-structured worst-case functions and their scaled instances.

Two families are provided. The ``classic`` chain is

    F_T(x) = sum_i [psi(-x_{i-1}) phi(-x_i) - psi(x_{i-1}) phi(x_i)],   x_0 = 1,

and the ``new`` windowed chain is

    F_{T,K,a}(x) = -sum_i psi_a(x_{i-K}) ... psi_a(x_{i-1}) phi(x_i) + sum_i gamma(x_i)

with the implied prefix x_0 = ... = x_{-K+1} = 1. The windowed chain needs a
complete run of K nonzero coordinates before the gradient can reveal the next
coordinate.

Coordinates are 1-indexed in every public function that takes or returns an
index; arrays are ordinary 0-indexed numpy vectors.
"""

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from . import kernels as kr

CLASSIC_DELTA0 = 12.0
CLASSIC_ELL1 = 152.0
CLASSIC_GAMMA_INF = 23.0


class InstanceError(ValueError):
    """Raised when a scaled instance cannot be built; ``code`` names the reason."""

    def __init__(self, code, message):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message

    def __reduce__(self):
        return type(self), (self.code, self.message)


@dataclass(frozen=True)
class ChainConstants:
    delta0: float
    ell1: float
    gamma_inf: float


@dataclass(frozen=True)
class WorstCaseFn:
    T: int
    K: int = 1
    a: float = math.e
    variant: str = "new"

    def __post_init__(self):
        if self.variant not in ("new", "classic"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.T < 1:
            raise ValueError("T must be positive")
        if not 1 <= self.K <= self.T:
            raise ValueError(f"need 1 <= K <= T, got K={self.K}, T={self.T}")
        kr.KernelParam(self.a)
        if self.variant == "classic" and (self.K != 1 or self.a != math.e):
            raise ValueError("the classic chain is defined only for K=1, a=e")

    @classmethod
    def classic(cls, T):
        return cls(T=T, K=1, a=math.e, variant="classic")

    def constants(self):
        return constants(self.K, self.a, self.variant)

    def __call__(self, x):
        return evaluate(self, x)

    def grad(self, x):
        return grad(self, x)


def constants(K, a, variant="new"):
    """Closed-form bounds (Delta^0, ell_1, gamma_inf) of the chain."""
    if variant == "classic":
        return ChainConstants(CLASSIC_DELTA0, CLASSIC_ELL1, CLASSIC_GAMMA_INF)
    la = math.log(kr.KernelParam(a))
    aK = a**K
    s2pi = math.sqrt(2.0 * math.pi)
    return ChainConstants(
        delta0=math.sqrt(2.0 * math.pi * math.e) * aK,
        ell1=12.0 * s2pi * math.e**2.5 * K**2 * aK / la,
        gamma_inf=6.0 * s2pi * math.e**1.5 * K * aK / math.sqrt(la),
    )


def prog(x, K=1):
    """Largest i >= 0 with x_i, ..., x_{i-K+1} all nonzero (prefix of ones implied)."""
    nz = np.asarray(x) != 0
    n = nz.size
    if n == 0:
        return 0
    idx = np.arange(1, n + 1)
    # last zero position at or before i; -inf-like sentinel when none
    last_zero = np.maximum.accumulate(np.where(nz, -n - K, idx))
    ok = idx - last_zero >= K
    hits = np.flatnonzero(ok)
    return int(hits[-1] + 1) if hits.size else 0


def _check_len(fn, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size != fn.T:
        raise ValueError(f"dimension mismatch: expected length {fn.T}, got shape {x.shape}")
    return x


def _windows(K, T, pv):
    """Stacked window S[m-1, i-1] = psi(x_{i-m}) with the all-ones prefix."""
    p = np.concatenate([np.ones(K), pv])
    S = np.empty((K, T))
    for m in range(1, K + 1):
        S[m - 1] = p[K - m : K - m + T]
    return S


def evaluate(fn, x):
    x = _check_len(fn, x)
    if fn.variant == "classic":
        prev = np.concatenate([[1.0], x[:-1]])
        a = fn.a
        terms = kr.psi(a, -prev) * kr.phi(-x) - kr.psi(a, prev) * kr.phi(x)
        return float(terms.sum())
    W = _windows(fn.K, fn.T, kr.psi(fn.a, x)).prod(axis=0)
    return float(-(W * kr.phi(x)).sum() + kr.gamma_fn(x).sum())


def _grad_classic(fn, x):
    a = fn.a
    pp, dp = kr.psi_all(a, x, 1)
    pm, dm = kr.psi_all(a, -x, 1)
    # psi_e(1) = 1 and psi_e(-1) = 0 for the implied x_0 = 1
    prev_p = np.concatenate([[1.0], pp[:-1]])
    prev_m = np.concatenate([[0.0], pm[:-1]])
    g = -prev_m * kr.phi_d1(-x) - prev_p * kr.phi_d1(x)
    g[:-1] += -dm[:-1] * kr.phi(-x[1:]) - dp[:-1] * kr.phi(x[1:])
    return g


def grad(fn, x):
    """Analytic gradient from the product-rule expansion; exact zeros are preserved."""
    x = _check_len(fn, x)
    if fn.variant == "classic":
        return _grad_classic(fn, x)
    T, K = fn.T, fn.K
    pv, dpsi = kr.psi_all(fn.a, x, 1)
    S = _windows(K, T, pv)
    phx = kr.phi(x)
    g = -S.prod(axis=0) * kr.phi_d1(x) + kr.gamma_all(x, 1)[1]
    # products of each window with one factor removed, via prefix/suffix products
    pre = np.ones((K + 1, T))
    suf = np.ones((K + 2, T))
    for m in range(1, K + 1):
        pre[m] = pre[m - 1] * S[m - 1]
    for m in range(K, 0, -1):
        suf[m] = suf[m + 1] * S[m - 1]
    for r in range(1, min(K, T - 1) + 1):
        # term i feeds coordinate j = i - r through psi'(x_j)
        excl = pre[r - 1, r:] * suf[r + 1, r:]
        g[: T - r] -= excl * dpsi[: T - r] * phx[r:]
    return g


def hessian_band(fn, x, step=1e-5):
    """Dense Hessian from central differences of the analytic gradient.

    Meant for tests; the band structure |i - j| <= K shows up as exact zeros
    because gradient entries outside the band do not depend on the perturbed
    coordinate.
    """
    x = _check_len(fn, x)
    if fn.T > 2000:
        raise ValueError("hessian_band is limited to T <= 2000")
    H = np.empty((fn.T, fn.T))
    for j in range(fn.T):
        hj = step * max(1.0, abs(x[j]))
        xp = x.copy()
        xm = x.copy()
        xp[j] += hj
        xm[j] -= hj
        H[:, j] = (grad(fn, xp) - grad(fn, xm)) / (2.0 * hj)
    return H


def spectral_norm(H, iters=500, seed=0):
    """Operator norm of a symmetric(ised) matrix; dense solve up to 200 rows."""
    H = 0.5 * (H + H.T)
    if H.shape[0] <= 200:
        return float(np.max(np.abs(np.linalg.eigvalsh(H))))
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(H.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = H @ (H @ v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        new = math.sqrt(nw)
        if abs(new - lam) <= 1e-10 * max(new, 1.0):
            return new
        lam = new
    return lam


def proof_window(n):
    """Window length K = 2 ceil(2 log 2n) and shape a = 1 + 1/K used for n workers."""
    K = 2 * math.ceil(2.0 * math.log(2 * n))
    return K, 1.0 + 1.0 / K


@dataclass(frozen=True)
class ObjectiveInstance:
    """Scaled objective f(x) = (L lam^2 / ell_1) F(x_[T] / lam) on R^d plus oracle parameters."""

    fn: WorstCaseFn
    d: int
    lam: float
    L: float
    Delta: float
    eps: float
    sigma2: float
    n: int
    p_sigma: float
    p_K: float

    @property
    def T(self):
        return self.fn.T

    @property
    def K(self):
        return self.fn.K

    @property
    def consts(self):
        return self.fn.constants()

    @property
    def value_scale(self):
        return self.L * self.lam**2 / self.consts.ell1

    @property
    def grad_scale(self):
        return self.L * self.lam / self.consts.ell1

    def eval_scaled(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.d,):
            raise ValueError(f"dimension mismatch: expected ({self.d},), got {x.shape}")
        return self.value_scale * evaluate(self.fn, x[: self.T] / self.lam)

    def grad_scaled(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.d,):
            raise ValueError(f"dimension mismatch: expected ({self.d},), got {x.shape}")
        g = np.zeros(self.d)
        g[: self.T] = self.grad_scale * grad(self.fn, x[: self.T] / self.lam)
        return g

    def to_dict(self):
        c = self.consts
        return {
            "variant": self.fn.variant,
            "T": self.fn.T,
            "K": self.fn.K,
            "a": self.fn.a,
            "d": self.d,
            "lambda": self.lam,
            "L": self.L,
            "Delta": self.Delta,
            "eps": self.eps,
            "sigma2": self.sigma2,
            "n": self.n,
            "p_sigma": self.p_sigma,
            "p_K": self.p_K,
            "constants": asdict(c),
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, doc):
        fn = WorstCaseFn(T=int(doc["T"]), K=int(doc["K"]), a=float(doc["a"]), variant=doc["variant"])
        return cls(
            fn=fn,
            d=int(doc["d"]),
            lam=float(doc["lambda"]),
            L=float(doc["L"]),
            Delta=float(doc["Delta"]),
            eps=float(doc["eps"]),
            sigma2=float(doc["sigma2"]),
            n=int(doc["n"]),
            p_sigma=float(doc["p_sigma"]),
            p_K=float(doc["p_K"]),
        )

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def build_instance(L, Delta, eps, n, sigma2, d, variant="new", K=None, a=None):
    """Scale a chain so that f is L-smooth with f(0) - inf f <= Delta.

    For ``variant="new"`` the window follows the worker count (see
    ``proof_window``) unless ``K``/``a`` are given explicitly.
    """
    if min(L, Delta, eps) <= 0 or sigma2 < 0 or n < 1 or d < 1:
        raise ValueError("need L, Delta, eps > 0, sigma2 >= 0, n >= 1, d >= 1")
    if variant == "classic":
        K, a = 1, math.e
    else:
        K0, a0 = proof_window(n)
        K = K0 if K is None else int(K)
        a = a0 if a is None else float(a)
    c = constants(K, a, variant)
    lam = math.sqrt(2.0 * eps) * c.ell1 / L
    T = math.floor(L * Delta / (2.0 * c.delta0 * c.ell1 * eps))
    if T < 1:
        raise InstanceError("T_ZERO", f"L*Delta/eps too small for a chain of length >= 1 (got T={T})")
    if T < K:
        raise InstanceError("T_ZERO", f"chain length T={T} is shorter than the window K={K}")
    if d < T:
        raise InstanceError("DIM_TOO_SMALL", f"d={d} is smaller than the chain length T={T}")
    p_sigma = 1.0 if sigma2 == 0 else min(2.0 * eps * c.gamma_inf**2 / sigma2, 1.0)
    fn = WorstCaseFn(T=T, K=K, a=a, variant=variant)
    return ObjectiveInstance(
        fn=fn, d=d, lam=lam, L=L, Delta=Delta, eps=eps, sigma2=sigma2, n=n,
        p_sigma=p_sigma, p_K=min(2.0 * K / d, 1.0),
    )


def delta_for_chain(T, L, eps, K=1, a=math.e, variant="classic", frac=1e-9):
    """A Delta for which ``build_instance`` yields chain length exactly T.

    ``frac`` in [0, 1) places Delta inside the range that rounds down to T;
    the default sits just above its lower edge.
    """
    if not 0 <= frac < 1:
        raise ValueError("frac must lie in [0, 1)")
    c = constants(K, a, variant)
    return (T + frac) * 2.0 * c.delta0 * c.ell1 * eps / L
