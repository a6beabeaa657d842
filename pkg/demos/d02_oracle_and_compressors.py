"""
Noisy oracle and sparsifying compressors
========================================

The stochastic oracle hides the next chain coordinate behind a coin flip
with success probability p_sigma. The compressors send a few coordinates
and rescale them so that the decoded vector is unbiased.
"""

import numpy as np

from lbopt import compressors as cp
from lbopt import oracle as orc
from lbopt import worstcase as wc

inst = wc.build_instance(1.0, wc.delta_for_chain(6, 1.0, 1e-3), 1e-3, n=2, sigma2=5.0, d=12,
                         variant="classic")
print(f"p_sigma = {inst.p_sigma:.4f}")

rng = np.random.default_rng(0)
x = np.zeros(inst.d)
x[:2] = 1.5 * inst.lam
g = inst.grad_scaled(x)
draws = np.array([orc.draw(inst, x, rng).result for _ in range(20_000)])
print("support of the gradient:", np.flatnonzero(g) + 1)
print("largest deviation of the mean draw from the gradient:", np.abs(draws.mean(0) - g).max())
print("empirical variance:", draws.var(0).sum(), " exact:", orc.exact_variance(inst, x))

# RandK keeps K coordinates and scales them by d/K
v = np.arange(1.0, 9.0)
msg = cp.rand_k(v, 3, rng)
print("RandK message:", msg.entries, "scale", msg.scale)
print("decoded:", msg.decode(v.size))
mean = np.mean([cp.rand_k(v, 3, rng).decode(v.size) for _ in range(20_000)], axis=0)
print("mean of 20000 decodes:", np.round(mean, 2))

# PermK: workers split one shared permutation; the scaled blocks average to v
perm = rng.permutation(v.size)
parts = [cp.perm_k(v, i, 3, perm=perm) for i in range(3)]
print("PermK blocks:", [p.indices.tolist() for p in parts])
print("average of decoded blocks:", sum(p.decode(v.size) for p in parts) / 3)

# wire format round trip
buf = msg.to_bytes()
print(f"{len(buf)} bytes on the wire, round trip equal: {cp.SparseMessage.from_bytes(buf) == msg}")
