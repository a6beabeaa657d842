"""Adversarial stochastic gradients for the scaled chain instances.

A draw returns the exact gradient on the already discovered coordinates and,
with a single Bernoulli(p_sigma) coin per call, either zero or the rescaled
gradient on the rest:

    [g(x; xi)]_j = grad_j f(x) * (1 + 1[j > prog1(x)] (xi / p_sigma - 1)).

The estimator is unbiased, and its variance is at most sigma^2 whenever
p_sigma comes from ``build_instance``.
"""

from dataclasses import dataclass

import numpy as np

from .worstcase import prog


@dataclass(frozen=True)
class OracleDraw:
    point: np.ndarray
    bernoulli: int
    result: np.ndarray


@dataclass(frozen=True)
class BatchDraw:
    """Sum of ``count`` independent draws at one point.

    ``first_reveal`` is the 1-based index of the first draw with xi = 1, or
    None if none of them fired (or nothing was masked to begin with).
    """

    total: np.ndarray
    successes: int
    first_reveal: int | None


def split_gradient(inst, x):
    """Return (grad f(x), its part on coordinates <= prog1(x), its part beyond)."""
    g = inst.grad_scaled(x)
    cut = prog(x, 1)
    seen = g.copy()
    seen[cut:] = 0.0
    hidden = g - seen
    return g, seen, hidden


def draw(inst, x, rng, check=False):
    """One oracle call at ``x`` using one uniform variate from ``rng``."""
    x = np.asarray(x, dtype=np.float64)
    g, seen, hidden = split_gradient(inst, x)
    xi = int(rng.random() < inst.p_sigma)
    result = seen + hidden * (xi / inst.p_sigma)
    if check:
        extra = (result != 0) & (g == 0)
        if extra.any():
            raise AssertionError("oracle produced a nonzero outside the support of the gradient")
    return OracleDraw(point=x, bernoulli=xi, result=result)


def draw_sum(inst, x, count, rng, grads=None):
    """Exact law of the sum of ``count`` draws at the same point.

    Since every draw shares the same gradient, only the number of successful
    coins matters. The first success is geometric and the rest binomial, which
    also yields the index of the draw that first reveals the hidden part.
    ``grads`` may pass a precomputed ``split_gradient`` result.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    g, seen, hidden = split_gradient(inst, x) if grads is None else grads
    p = inst.p_sigma
    if not hidden.any():
        return BatchDraw(total=count * g, successes=0, first_reveal=None)
    if p >= 1.0:
        return BatchDraw(total=count * g, successes=count, first_reveal=1)
    first = int(rng.geometric(p))
    if first > count:
        return BatchDraw(total=count * seen, successes=0, first_reveal=None)
    succ = 1 + int(rng.binomial(count - first, p))
    return BatchDraw(total=count * seen + (succ / p) * hidden, successes=succ, first_reveal=first)


def exact_variance(inst, x):
    """E||g(x; xi) - grad f(x)||^2 in closed form."""
    if inst.p_sigma <= 0:
        raise ValueError("p_sigma must be positive")
    _, _, hidden = split_gradient(inst, x)
    p = inst.p_sigma
    return float(hidden @ hidden) * (1.0 - p) / p


def draw_many(inst, x, count, rng):
    """``count`` draws at ``x`` as rows of a matrix, plus the coin vector.

    Consumes the stream exactly like ``count`` successive ``draw`` calls.
    """
    g, seen, hidden = split_gradient(inst, np.asarray(x, dtype=np.float64))
    xi = (rng.random(count) < inst.p_sigma).astype(np.int64)
    return seen[None, :] + np.outer(xi / inst.p_sigma, hidden), xi
