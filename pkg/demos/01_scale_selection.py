"""
Automatic scale selection on a sinusoid
=======================================

Smooth a sine wave at a range of scales, differentiate, and rescale the
derivative by t^(m*gamma). The plain derivative only shrinks as t grows.
The rescaled one rises first and then falls, and its peak lands on
t = 2 m gamma / omega^2.
"""
import math

import numpy as np

from scan.scale_space import (ScaleOracleSpec, empirical_amplitude_curve, empirical_scale_peak,
                              normalized_derivative_amplitude)

omega, m = 1.0, 1
peak = 2 * m / omega ** 2
grid = tuple(np.linspace(peak / 4, 3 * peak, 160))
h = (2 * math.pi / omega) / 64     # 64 samples per period

normalized = ScaleOracleSpec(omega, m, 1.0, grid)
ordinary = ScaleOracleSpec(omega, m, 0.0, grid)

measured = empirical_amplitude_curve(normalized, h)
plain = empirical_amplitude_curve(ordinary, h)

print("   t     normalized  (analytic)   ordinary")
for i in range(0, len(grid), 16):
    t = grid[i]
    print(f"{t:6.3f}   {measured[i]:9.5f}  ({normalized_derivative_amplitude(normalized, t):9.5f})"
          f"  {plain[i]:9.5f}")

t_hat, amp = empirical_scale_peak(normalized, h)
print(f"\nmeasured peak t = {t_hat:.4f}, expected {peak:.4f}")

# the same experiment for every frequency and derivative order
for omega in (0.5, 1.0, 2.0):
    for m in (1, 2, 3):
        peak = 2 * m / omega ** 2
        grid = tuple(np.linspace(peak / 4, 3 * peak, 160))
        t_hat, _ = empirical_scale_peak(ScaleOracleSpec(omega, m, 1.0, grid), (2 * math.pi / omega) / 64)
        print(f"omega={omega:3.1f} m={m}: t_hat={t_hat:7.4f} expected={peak:7.4f}")
