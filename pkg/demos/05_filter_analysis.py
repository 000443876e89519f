"""
What kind of filter does a SAC layer learn?
===========================================

Each SAC kernel k can be read as k_a applied after the shortcut k_i. Given
k and k_i we recover k_a by regularized division in the Fourier domain.
The operator t (g * k_a) + identity then shows whether the layer sharpens
or smooths what the shortcut passes through.
"""
import numpy as np

from scan.analysis import (classify_xpass, filter_decomposition, full_convolution, truncation_mass,
                           xpass_classification)
from scan.network import SacNetwork

# a known factorization first: build k from k_a and check we get k_a back
rng = np.random.default_rng(4)
k_a = rng.normal(size=(3, 3))
k_i = np.pad(np.ones((1, 1)), 1) + 0.3 * rng.normal(size=(3, 3))
fa = filter_decomposition(full_convolution(k_a, k_i), k_i)
print("recovery error:", np.abs(fa.k_a - k_a).max())

laplacian = np.array([[0, 1, 0], [1, -4, 1], [0, 1, 0]], dtype=float)
for name, kernel in (("laplacian", laplacian), ("box", np.ones((3, 3))), ("zero", np.zeros((3, 3)))):
    for t in (0.5, 1.0, 4.0):
        cls, dc, high, _ = classify_xpass(kernel, t)
        print(f"{name:9s} t={t:3.1f}: dc={dc:6.3f} outer={high:6.3f} -> {cls}")

# on an untrained network the classes are whatever the random init gives
net = SacNetwork.init(1, [4], 2, seed=0)
layer = net.layers[0]
for o in range(layer.out_channels):
    res = xpass_classification(layer.k[o, 0], layer.k_i[o, 0], float(layer.t[o]))
    print(f"filter {o}: {res.xpass_class}, residual {res.rel_residual:.1e}")

# how much Gaussian mass the 5x5 window cuts off
for t in (0.25, 1.0, 2.0, 4.0):
    print(f"t={t:4.2f}: {truncation_mass(t):.2e} of the mass falls outside 5x5")
