"""Property-check suites shared by the command line and the test-suite.

Each suite returns a list of ``CheckResult``; a suite passes when every
check does. Relative errors use a unit floor, |a - b| / max(|b|, 1), so
that entries whose true value is near zero are compared absolutely.
"""

import math
from dataclasses import asdict, dataclass, field
from itertools import combinations

import numpy as np
from scipy.stats import chisquare

from . import compressors as cp
from . import kernels as kr
from . import oracle as orc
from . import worstcase as wc

FUNCTION_CONFIGS = ((50, 1, math.e), (60, 4, 1.25), (80, 6, 7.0 / 6.0), (100, 2, 1.5))
KERNEL_PARAMS = (1.1, 1.25, 1.5, 2.0, math.e)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""
    metric: float | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.passed = bool(self.passed)
        if self.metric is not None:
            self.metric = float(self.metric)

    def to_dict(self):
        return asdict(self)


def all_passed(results):
    return all(r.passed for r in results)


def _rel(a, b):
    return np.abs(a - b) / np.maximum(np.abs(b), 1.0)


# kernels


def kernel_suite(points=10_000, tol=1e-9, fd_tol=1e-6, step=1e-6, break_tol=1e-3, break_step=1e-5):
    out = []
    x = np.linspace(-10.0, 10.0, points)
    for a in KERNEL_PARAMS:
        tag = {"a": a}
        p0, p1, p2 = kr.psi_all(a, x)
        amax, d1max, d2max = kr.psi_bounds(a)
        out.append(CheckResult("psi_range", bool(p0.min() >= 0 and p0.max() < amax), params=tag,
                               metric=float(p0.max())))
        out.append(CheckResult("psi_monotone", bool(np.all(np.diff(p0) >= -tol)), params=tag))
        out.append(CheckResult("psi_at_least_one_beyond_one", bool(np.all(p0[x >= 1] >= 1 - tol)), params=tag))
        out.append(CheckResult("psi_d1_bound", bool(p1.min() >= -tol and p1.max() <= d1max + tol),
                               metric=float(p1.max() / d1max), params=tag))
        out.append(CheckResult("psi_d2_bound", bool(np.abs(p2).max() <= d2max + tol),
                               metric=float(np.abs(p2).max() / d2max), params=tag))
        mask = np.abs(x - 0.5) > 2 * step
        h = step * np.maximum(1.0, np.abs(x))
        fd1 = (kr.psi(a, x + h) - kr.psi(a, x - h)) / (2 * h)
        fd2 = (kr.psi_d1(a, x + h) - kr.psi_d1(a, x - h)) / (2 * h)
        e1 = float(_rel(fd1, p1)[mask].max())
        e2 = float(_rel(fd2, p2)[mask].max())
        out.append(CheckResult("psi_d1_matches_fd", e1 <= fd_tol, metric=e1, params=tag))
        out.append(CheckResult("psi_d2_matches_fd", e2 <= fd_tol, metric=e2, params=tag))
        # one-sided quotients at the switch-on point
        b = 0.5
        right = [(kr.psi(a, b + break_step) - kr.psi(a, b)) / break_step,
                 (kr.psi_d1(a, b + break_step) - kr.psi_d1(a, b)) / break_step]
        left = [(kr.psi(a, b) - kr.psi(a, b - break_step)) / break_step,
                (kr.psi_d1(a, b) - kr.psi_d1(a, b - break_step)) / break_step]
        worst = max(abs(right[0] - kr.psi_d1(a, b)), abs(left[0] - kr.psi_d1(a, b)),
                    abs(right[1] - kr.psi_d2(a, b)), abs(left[1] - kr.psi_d2(a, b)))
        out.append(CheckResult("psi_smooth_at_half", worst <= break_tol, metric=float(worst), params=tag))

    f0, f1, f2 = kr.phi(x), kr.phi_d1(x), kr.phi_d2(x)
    out.append(CheckResult("phi_range", bool(f0.min() >= 0 and f0.max() <= kr.PHI_MAX + tol)))
    inner = np.abs(x) <= 0.99
    out.append(CheckResult("phi_d1_above_one", bool(np.all(f1[inner] >= 1 + 1e-3)), metric=float(f1[inner].min())))
    out.append(CheckResult("phi_d2_bound", bool(np.abs(f2).max() <= kr.PHI_D2_MAX)))
    h = step * np.maximum(1.0, np.abs(x))
    e1 = float(_rel((kr.phi(x + h) - kr.phi(x - h)) / (2 * h), f1).max())
    e2 = float(_rel((kr.phi_d1(x + h) - kr.phi_d1(x - h)) / (2 * h), f2).max())
    out.append(CheckResult("phi_d1_matches_fd", e1 <= fd_tol, metric=e1))
    out.append(CheckResult("phi_d2_matches_fd", e2 <= fd_tol, metric=e2))

    g0, g1, g2 = kr.gamma_all(x)
    out.append(CheckResult("gamma_nonnegative", bool(g0.min() >= 0)))
    out.append(CheckResult("gamma_d1_range", bool(g1.min() > kr.GAMMA_D1_MIN and g1.max() <= 0)))
    out.append(CheckResult("gamma_d1_at_most_minus_two", bool(np.all(g1[x <= -1] <= -2 + tol))))
    out.append(CheckResult("gamma_d2_range", bool(g2.min() >= 0 and g2.max() <= kr.GAMMA_D2_MAX + 1e-12),
                           metric=float(g2.max())))
    mask = np.abs(x) > 2 * step
    e1 = float(_rel((kr.gamma_fn(x + h) - kr.gamma_fn(x - h)) / (2 * h), g1)[mask].max())
    e2 = float(_rel((kr.gamma_d1(x + h) - kr.gamma_d1(x - h)) / (2 * h), g2)[mask].max())
    out.append(CheckResult("gamma_d1_matches_fd", e1 <= fd_tol, metric=e1))
    out.append(CheckResult("gamma_d2_matches_fd", e2 <= fd_tol, metric=e2))
    s = break_step
    quot = [(kr.gamma_fn(s) - kr.gamma_fn(0.0)) / s, (kr.gamma_fn(0.0) - kr.gamma_fn(-s)) / s,
            (kr.gamma_d1(s) - kr.gamma_d1(0.0)) / s, (kr.gamma_d1(0.0) - kr.gamma_d1(-s)) / s]
    worst = max(abs(quot[0] - kr.gamma_d1(0.0)), abs(quot[1] - kr.gamma_d1(0.0)),
                abs(quot[2] - kr.gamma_d2(0.0)), abs(quot[3] - kr.gamma_d2(0.0)))
    out.append(CheckResult("gamma_smooth_at_zero", worst <= break_tol, metric=float(worst)))
    return out


# chain functions


_VALUES = np.array([-20.0, -3.0, -1.0, -0.3, -1e-3, 0.2, 0.5, 0.5 + 1e-4, 0.55, 0.7, 0.9, 0.999, 1.0, 1.2, 2.0, 5.0])


def sample_points(fn, count, rng):
    """Mixed random points: dense, sparse, and with a controlled window-progress.

    Values cluster near the places where the chain changes behaviour (just
    above 1/2, around 1, and on the negative barrier).
    """
    T, K = fn.T, fn.K
    pts = []
    for k in range(count):
        kind = k % 4
        if kind == 0:
            x = rng.uniform(-2.0, 3.0, T)
        elif kind == 1:
            x = rng.choice(_VALUES, T) + rng.normal(0.0, 0.01, T) * (rng.random(T) < 0.5)
            x *= rng.random(T) < 0.7
        else:
            # complete windows up to m, then a broken window and sparse tail
            m = int(rng.integers(0, T + 1))
            x = np.zeros(T)
            x[:m] = rng.choice(_VALUES[_VALUES != 0], m)
            if kind == 3:
                x[:m] = np.abs(x[:m]) + 0.6
            if m < T:
                tail = rng.choice(_VALUES, T - m) * (rng.random(T - m) < 0.4)
                gap = min(T, m + int(rng.integers(0, K))) if K > 1 else m
                tail[: max(1, gap - m + 1)] = 0.0
                x[m:] = tail
        pts.append(x)
    return pts


def _fd_grad(fn, x, step=1e-6):
    g = np.empty(fn.T)
    for j in range(fn.T):
        h = step * max(1.0, abs(x[j]))
        xp = x.copy()
        xm = x.copy()
        xp[j] += h
        xm[j] -= h
        g[j] = (wc.evaluate(fn, xp) - wc.evaluate(fn, xm)) / (2 * h)
    return g


def planted_grad_bug(fn, x):
    """A wrong gradient for self-tests: the last partial derivative is perturbed."""
    g = wc.grad(fn, x)
    g[-1] += 1e-3 * (1.0 + abs(g[-1]))
    return g


def function_suite(configs=FUNCTION_CONFIGS, points=100, hessian_points=20, seed=0,
                   grad_fn=None, fd_tol=1e-5):
    """Chain-function invariants on mixed random points for each (T, K, a)."""
    grad_fn = wc.grad if grad_fn is None else grad_fn
    rng = np.random.default_rng(seed)
    out = []
    for T, K, a in configs:
        fn = wc.WorstCaseFn(T=T, K=K, a=a)
        c = fn.constants()
        tag = {"T": T, "K": K, "a": a}
        fd_err = 0.0
        small_grad = math.inf
        inf_ratio = 0.0
        low_ratio = -math.inf
        progress_bad = 0
        for x in sample_points(fn, points, rng):
            g = grad_fn(fn, x)
            fd_err = max(fd_err, float(_rel(_fd_grad(fn, x), g).max()))
            pk = wc.prog(x, K)
            if pk < T:
                small_grad = min(small_grad, float(np.linalg.norm(g)))
            inf_ratio = max(inf_ratio, float(np.abs(g).max()) / c.gamma_inf)
            low_ratio = max(low_ratio, -wc.evaluate(fn, x) / (c.delta0 * T))
            if wc.prog(g, 1) > max(pk + 1, wc.prog(x, 1)):
                progress_bad += 1
        out.append(CheckResult("grad_matches_fd", fd_err <= fd_tol, metric=fd_err, params=tag))
        out.append(CheckResult("large_gradient_before_end", small_grad > 1.0, metric=small_grad, params=tag))
        out.append(CheckResult("grad_inf_bound", inf_ratio <= 1.0, metric=inf_ratio, params=tag))
        out.append(CheckResult("value_lower_bound", low_ratio <= 1.0, metric=low_ratio, params=tag))
        out.append(CheckResult("progress_containment", progress_bad == 0, metric=float(progress_bad), params=tag))

        band = 0
        band_bad = 0
        norm_ratio = 0.0
        hess_pts = [rng.uniform(-1.5, 3.0, T) for _ in range(hessian_points // 2)]
        hess_pts += sample_points(fn, hessian_points - len(hess_pts), rng)
        for x in hess_pts:
            H = wc.hessian_band(fn, x)
            i, j = np.nonzero(H)
            if i.size:
                width = int(np.abs(i - j).max())
                band = max(band, width)
                band_bad += width > K
            norm_ratio = max(norm_ratio, wc.spectral_norm(H) / c.ell1)
        out.append(CheckResult("hessian_bandwidth", band == K and band_bad == 0, metric=float(2 * band + 1),
                               params=tag, detail=f"observed bandwidth {2 * band + 1}, expected {2 * K + 1}"))
        out.append(CheckResult("hessian_norm_bound", norm_ratio <= 1.0, metric=norm_ratio, params=tag))
    return out


def classic_suite(T=40, points=100, seed=0, tol=1e-12):
    """Classic chain against a term-by-term summation."""
    rng = np.random.default_rng(seed)
    fn = wc.WorstCaseFn.classic(T)
    worst = 0.0
    for _ in range(points):
        x = rng.normal(0.0, 1.5, T)
        naive = 0.0
        prev = 1.0
        for xi in x:
            naive += kr.psi(math.e, -prev) * kr.phi(-xi) - kr.psi(math.e, prev) * kr.phi(xi)
            prev = xi
        worst = max(worst, abs(naive - wc.evaluate(fn, x)) / max(abs(naive), 1e-300))
    return [CheckResult("classic_matches_naive_sum", worst <= tol, metric=worst, params={"T": T})]


# oracle


def oracle_instances():
    """Small scaled instances covering both chain families and several noise levels."""
    return [
        wc.build_instance(1.0, wc.delta_for_chain(12, 1.0, 1e-2), 1e-2, 2, 20.0, 48, variant="classic"),
        wc.build_instance(2.0, wc.delta_for_chain(20, 2.0, 1e-3), 1e-3, 4, 5.0, 40, variant="classic"),
        _new_instance(T=12, n=1, sigma2_over_eps=5e6, d=24),
        _new_instance(T=18, n=2, sigma2_over_eps=1e8, d=36),
    ]


def _new_instance(T, n, sigma2_over_eps, d, L=1.0, eps=1e-3):
    K, a = wc.proof_window(n)
    Delta = wc.delta_for_chain(T, L, eps, K, a, "new")
    return wc.build_instance(L, Delta, eps, n, sigma2_over_eps * eps, d, variant="new")


def _oracle_points(inst, count, rng):
    pts = []
    T, d = inst.T, inst.d
    for k in range(count):
        x = np.zeros(d)
        m = int(rng.integers(0, T + 1))
        x[:m] = inst.lam * rng.choice(_VALUES, m)
        if k % 3 == 0:
            x[:m] = inst.lam * (np.abs(x[:m] / inst.lam) + 0.6)
        if k % 5 == 0:
            x[rng.integers(0, d)] = inst.lam * rng.normal()
        pts.append(x)
    return pts


def oracle_suite(draws=100_000, variance_points=1000, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for idx, inst in enumerate(oracle_instances()):
        tag = {"instance": idx, "variant": inst.fn.variant, "T": inst.T, "p_sigma": inst.p_sigma}
        worst = 0.0
        for x in _oracle_points(inst, variance_points, rng):
            worst = max(worst, orc.exact_variance(inst, x) / inst.sigma2)
        out.append(CheckResult("variance_at_most_sigma2", worst <= 1.0, metric=worst, params=tag))

        # a point with a complete prefix, so the next coordinate is masked
        x = np.zeros(inst.d)
        m = max(inst.K, inst.T // 2)
        x[:m] = 1.5 * inst.lam
        g = inst.grad_scaled(x)
        M, xi = orc.draw_many(inst, x, draws, rng)
        # reduce along contiguous rows so numpy sums pairwise
        cols = np.ascontiguousarray(M.T)
        mean = cols.mean(axis=1)
        sd = cols.std(axis=1)
        # the floor covers summation rounding on coordinates that never vary
        slack = 4.0 * sd / math.sqrt(draws) + 1e-12 * np.abs(g).max()
        ok = bool(np.all(np.abs(mean - g) <= slack))
        dev = float(np.max(np.abs(mean - g) / np.maximum(slack, 1e-300)))
        out.append(CheckResult("unbiased_4sigma", ok, metric=dev, params=tag))

        cut = wc.prog(x, 1)
        hidden = np.flatnonzero(g[cut:]) + cut
        p = inst.p_sigma
        hits = int(xi.sum())
        band = 4.0 * math.sqrt(draws * p * (1 - p))
        count_ok = abs(hits - draws * p) <= band
        vals = M[:, hidden]
        scaled = g[hidden] * (1.0 / p)
        exact = np.all((vals == 0) | (vals == scaled), axis=1)
        fired = np.all(vals == scaled, axis=1)
        law_ok = bool(count_ok and exact.all() and np.array_equal(fired, xi == 1) and hidden.size > 0
                      and np.array_equal(M[:, :cut], np.broadcast_to(g[:cut], (draws, cut))))
        out.append(CheckResult("masked_law_exact", law_ok, metric=float(hits), params=tag,
                               detail=f"{hits} successes, expected {draws * p:.1f} +- {band:.1f}"))
    return out


# compressors


def _burst_moments(x, K, draws, rng):
    """Per-coordinate mean and second moment of RandK decodes, plus mean squared error."""
    d = x.size
    batch = cp.RandK(K).burst(x, draws, rng)
    idx = batch.indices.reshape(-1) - 1
    val = batch.scale * batch.values.reshape(-1)
    s1 = np.bincount(idx, weights=val, minlength=d) / draws
    s2 = np.bincount(idx, weights=val * val, minlength=d) / draws
    # ||C - x||^2 per draw, from the rows of the batch
    dec = batch.scale * batch.values
    err = (x @ x) - (batch.values ** 2).sum(axis=1) + ((dec - batch.values) ** 2).sum(axis=1)
    return s1, s2, err


def compressor_suite(draws=100_000, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for d, K in ((10, 1), (50, 1), (20, 3), (64, 8), (7, 7)):
        x = rng.normal(0.0, 1.0, d)
        tag = {"d": d, "K": K}
        s1, s2, err = _burst_moments(x, K, draws, rng)
        sd = np.sqrt(np.maximum(s2 - s1 * s1, 0.0))
        # bincount sums sequentially, so allow for its rounding on constant coordinates
        slack = 4.0 * sd / math.sqrt(draws) + 1e-9 * np.abs(x).max()
        dev = float(np.max(np.abs(s1 - x) / np.maximum(slack, 1e-300)))
        out.append(CheckResult("randk_unbiased_4sigma", bool(np.all(np.abs(s1 - x) <= slack)), metric=dev, params=tag))
        omega = d / K - 1.0
        bound = omega * (x @ x)
        m = float(err.mean())
        ok = m <= bound + 4.0 * float(err.std()) / math.sqrt(draws) + 1e-12 * bound
        out.append(CheckResult("randk_variance_factor", ok, metric=m / max(bound, 1e-300) if bound else m, params=tag))

    # single-call path for Rand1, which uses a different sampler than bursts
    d = 8
    x = rng.normal(0.0, 1.0, d)
    acc = np.zeros(d)
    sq = np.zeros(d)
    n_single = draws // 5
    for _ in range(n_single):
        v = cp.rand_k(x, 1, rng).decode(d)
        acc += v
        sq += v * v
    mean = acc / n_single
    sd = np.sqrt(np.maximum(sq / n_single - mean**2, 0.0))
    ok = bool(np.all(np.abs(mean - x) <= 4.0 * sd / math.sqrt(n_single) + 1e-12))
    out.append(CheckResult("rand1_single_unbiased_4sigma", ok, params={"d": d, "draws": n_single}))

    for d, K in ((4, 2), (5, 2), (6, 3), (6, 2), (5, 3)):
        subsets = {s: k for k, s in enumerate(combinations(range(1, d + 1), K))}
        counts = np.zeros(len(subsets))
        for _ in range(draws):
            counts[subsets[tuple(cp.rand_k(np.ones(d), K, rng).indices.tolist())]] += 1
        pval = float(chisquare(counts).pvalue)
        out.append(CheckResult("randk_subset_uniform", pval > 1e-3, metric=pval, params={"d": d, "K": K}))

    n, d = 4, 22
    x = rng.normal(0.0, 1.0, d)
    acc = np.zeros(d)
    disjoint = True
    trials = draws // 20
    for _ in range(trials):
        perm = rng.permutation(d)
        msgs = [cp.perm_k(x, i, n, perm=perm) for i in range(n)]
        idx = np.concatenate([m.indices for m in msgs])
        disjoint &= np.array_equal(np.sort(idx), np.arange(1, d + 1))
        acc += sum(m.decode(d) for m in msgs) / n
    out.append(CheckResult("permk_partition", bool(disjoint), params={"n": n, "d": d}))
    out.append(CheckResult("permk_average_exact", bool(np.allclose(acc / trials, x, rtol=1e-12, atol=1e-12)),
                           params={"n": n, "d": d}))
    return out
