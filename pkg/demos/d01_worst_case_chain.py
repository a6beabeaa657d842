"""
Worst-case chain functions
==========================

The hard function is a chain of T coordinates glued together by smooth
kernels. A first-order method only learns about coordinate j+1 once
coordinate j is already large, so the gradient stays big until the whole
chain has been walked.
"""

import numpy as np

from lbopt import kernels as kn
from lbopt import worstcase as wc

# the three kernels on a small grid
x = np.linspace(-1, 3, 9)
print("psi_a (a = e):", np.round(kn.psi(np.e, x), 4))
print("phi          :", np.round(kn.phi(x), 4))
print("gamma        :", np.round(kn.gamma_fn(x), 4))

# the constants of the two chain variants
print("classic chain:", wc.constants(1, np.e, "classic"))
K, a = wc.proof_window(8)
print(f"window for n = 8 workers: K = {K}, a = {a:.4f}")
print("windowed chain:", wc.constants(K, a, "new"))

# progress is the index of the last large coordinate
fn = wc.WorstCaseFn(T=6, K=1, a=np.e, variant="classic")
z = np.zeros(6)
for j in range(4):
    z[j] = 1.5
    g = wc.grad(fn, z)
    print(f"prog = {wc.prog(z)}, nonzero grad coords = {np.flatnonzero(g) + 1}, |grad| = {np.linalg.norm(g):.3f}")

# a scaled instance: Delta chosen so that the chain is T = 8 long
Delta = wc.delta_for_chain(8, 1.0, 1e-3)
inst = wc.build_instance(1.0, Delta, 1e-3, n=4, sigma2=2.0, d=32, variant="classic")
print(f"Delta = {Delta:.2f}, T = {inst.T}, p_sigma = {inst.p_sigma:.4f}")
