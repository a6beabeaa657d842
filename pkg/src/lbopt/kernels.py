"""Scalar building blocks of the chain functions.

``psi`` is the smooth gate that switches on above 1/2, ``phi`` a scaled
Gaussian CDF and ``gamma_fn`` the barrier that penalises negative
coordinates. Every function accepts scalars or arrays and returns float64.
"""

import math

import numpy as np
from scipy.special import erfc

SQRT_E = math.sqrt(math.e)
PHI_MAX = math.sqrt(2.0 * math.pi * math.e)

# exp() underflows to exactly zero below this exponent
_EXP_FLOOR = -745.0
# inputs beyond this magnitude are clamped inside the exponent only
_CLAMP = 1e10


class KernelParam(float):
    """Shape parameter ``a`` of ``psi``; construction enforces 1 < a <= e."""

    def __new__(cls, a):
        a = float(a)
        if not (1.0 < a <= math.e):
            raise ValueError(f"kernel parameter must satisfy 1 < a <= e, got {a!r}")
        return super().__new__(cls, a)

    @property
    def log(self):
        return math.log(self)


def _log_a(a):
    return math.log(KernelParam(a))


def _shape(x, outs):
    if x.ndim:
        return outs
    return tuple(float(o) for o in outs)


def psi_all(a, x, order=2):
    """Return (psi, psi', psi'') up to ``order`` in one pass over the active branch."""
    x = np.asarray(x, dtype=np.float64)
    flat = x.reshape(-1)
    la = _log_a(a)
    outs = [np.zeros(flat.shape) for _ in range(order + 1)]
    idx = np.flatnonzero(flat > 0.5)
    if idx.size:
        s = np.minimum(2.0 * flat[idx] - 1.0, 2.0 * _CLAMP)
        inv = 1.0 / (s * s)
        expo = la * (1.0 - inv)
        keep = expo > _EXP_FLOOR
        if not keep.all():
            idx, s, inv, expo = idx[keep], s[keep], inv[keep], expo[keep]
        val = np.exp(expo)
        outs[0][idx] = val
        if order >= 1:
            outs[1][idx] = 4.0 * la * inv / s * val
        if order >= 2:
            # -8 log a (3 s^2 - 2 log a) / s^6, rewritten to avoid large powers
            outs[2][idx] = -8.0 * la * (3.0 - 2.0 * la * inv) * inv * inv * val
    return _shape(x, [o.reshape(x.shape) for o in outs])


def psi(a, x):
    """Gate ``Psi_a``: 0 for x <= 1/2, else ``exp(log a * (1 - 1/(2x-1)^2))``."""
    return psi_all(a, x, 0)[0]


def psi_d1(a, x):
    return psi_all(a, x, 1)[1]


def psi_d2(a, x):
    return psi_all(a, x, 2)[2]


def phi(x):
    """``sqrt(e) * int_{-inf}^x exp(-t^2/2) dt`` via the complementary error function."""
    x = np.asarray(x, dtype=np.float64)
    out = SQRT_E * math.sqrt(math.pi / 2.0) * erfc(-x / math.sqrt(2.0))
    return out if out.ndim else float(out)


def phi_d1(x):
    x = np.asarray(x, dtype=np.float64)
    out = SQRT_E * np.exp(-0.5 * x * x)
    return out if out.ndim else float(out)


def phi_d2(x):
    x = np.asarray(x, dtype=np.float64)
    out = -x * SQRT_E * np.exp(-0.5 * x * x)
    return out if out.ndim else float(out)


def gamma_all(x, order=2):
    """Return (Gamma, Gamma', Gamma'') up to ``order``; zero for x >= 0."""
    x = np.asarray(x, dtype=np.float64)
    flat = x.reshape(-1)
    outs = [np.zeros(flat.shape) for _ in range(order + 1)]
    idx = np.flatnonzero(flat < 0.0)
    if idx.size:
        xs = flat[idx]
        u = 1.0 / np.maximum(xs, -_CLAMP)
        expo = u + 1.0
        keep = expo > _EXP_FLOOR
        if not keep.all():
            idx, xs, u, expo = idx[keep], xs[keep], u[keep], expo[keep]
        e = np.exp(expo)
        outs[0][idx] = -xs * e
        if order >= 1:
            outs[1][idx] = -e + e * u
        if order >= 2:
            outs[2][idx] = -e * u**3
    return _shape(x, [o.reshape(x.shape) for o in outs])


def gamma_fn(x):
    """Barrier ``Gamma``: ``-x exp(1/x + 1)`` for x < 0, zero otherwise."""
    return gamma_all(x, 0)[0]


def gamma_d1(x):
    return gamma_all(x, 1)[1]


def gamma_d2(x):
    return gamma_all(x, 2)[2]


def psi_bounds(a):
    """Upper bounds (sup psi, sup psi', sup |psi''|) for a given shape parameter."""
    la = _log_a(a)
    return float(a), 2.0 * math.e / math.sqrt(la), 56.0 * math.e / la


PHI_D1_MAX = SQRT_E
PHI_D2_MAX = 27.0
GAMMA_D1_MIN = -math.e
GAMMA_D2_MAX = 27.0 * math.exp(-2.0)
