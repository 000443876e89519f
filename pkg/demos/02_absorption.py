"""
Folding a SAC layer into one 3x3 kernel
=======================================

During training a SAC layer runs two convolutions: the Gaussian-smoothed
derivative kernel scaled by t, plus the shortcut kernel. Both are linear
in the input, so for inference they collapse into a single 3x3 bank k_u.
"""
import numpy as np

from scan.network import SacNetwork, inference_cost, plain_baseline_cost
from scan.sac import SacLayer, absorb, sac_forward

rng = np.random.default_rng(0)
layer = SacLayer.init(2, 3, rng, activation=False)
layer.theta = np.log([0.5, 1.0, 3.0])            # three different learnt scales
print("t per filter:", layer.t)

x = rng.normal(size=(4, 2, 12, 12))
sac_forward(x, layer, mode="train")
two_branch = layer.last_pre
sac_forward(x, layer, mode="absorbed")
one_kernel = layer.last_pre

gap = np.abs(two_branch - one_kernel)[..., 2:-2, 2:-2].max()
print("max interior difference:", gap)

k_u = absorb(layer).k_u
print("absorbed bank shape:", k_u.shape)
print("filter 2, channel 0:\n", np.round(k_u[2, 0], 4))

# the deployed network costs exactly what a plain conv net of the same widths costs
net = SacNetwork.init(1, [8, 8], 4, seed=1)
print("deployed:", inference_cost(net))
print("plain   :", plain_baseline_cost(1, [8, 8], 4))
