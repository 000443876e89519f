"""Gaussian scale-space: sampled kernels, smoothing, and the automatic
scale-selection oracles used to validate the learnable layers.

Scales ``t`` are variances, so the kernel standard deviation is ``sqrt(t)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError, ShapeError
from .tensor import conv2d


@dataclass(frozen=True)
class GaussianKernel:
    t: float
    dim: int
    radius: int
    values: np.ndarray
    normalized: bool

    @property
    def size(self) -> int:
        return 2 * self.radius + 1


def default_radius(t: float, max_radius: int | None = None) -> int:
    """``ceil(4 sqrt(t))``, at least 1, optionally clamped to ``max_radius``."""
    r = max(1, math.ceil(4.0 * math.sqrt(max(t, 0.0))))
    if max_radius is not None:
        r = min(r, max_radius)
    return r


def gaussian_kernel(t: float, radius: int | None = None, dim: int = 2,
                    normalized: bool = True) -> GaussianKernel:
    """Sample ``(2 pi t)^(-D/2) exp(-|x|^2 / 2t)`` on the integer grid ``[-radius, radius]^D``."""
    if not t > 0:
        raise DomainError(f"scale must be positive, got t={t}")
    if dim not in (1, 2):
        raise DomainError(f"dimensionality must be 1 or 2, got {dim}")
    if radius is None:
        radius = default_radius(t)
    if radius < 1:
        raise DomainError(f"radius must be >= 1, got {radius}")
    # only squared offsets enter, so x and -x give identical values
    sq = np.arange(-radius, radius + 1, dtype=np.float64) ** 2
    if dim == 2:
        sq = sq[:, None] + sq[None, :]
    values = np.exp(-sq / (2.0 * t)) / (2.0 * math.pi * t) ** (dim / 2.0)
    if normalized:
        values = values / values.sum()
    return GaussianKernel(float(t), dim, radius, values, normalized)


def normalized_gaussian_with_dt(t: float, radius: int) -> tuple[np.ndarray, np.ndarray]:
    """Unit-sum 2-D Gaussian and its exact derivative with respect to ``t``.

    The ``(2 pi t)^-1`` prefactor cancels under renormalization, so only the
    exponential is differentiated, followed by the quotient rule.
    """
    if not t > 0:
        raise DomainError(f"scale must be positive, got t={t}")
    sq = np.arange(-radius, radius + 1, dtype=np.float64) ** 2
    sq = sq[:, None] + sq[None, :]
    h = np.exp(-sq / (2.0 * t))
    dh = h * sq / (2.0 * t * t)
    s, ds = h.sum(), dh.sum()
    return h / s, (dh * s - h * ds) / (s * s)


def scale_space_rep(signal: np.ndarray, t: float, radius: int | None = None) -> np.ndarray:
    """Smooth ``signal`` with the unit-sum Gaussian of variance ``t`` (same size, zero padding).

    Accepts 1-D signals, 2-D images, or (batch, channel, h, w) stacks, which
    are smoothed channel by channel. ``t == 0`` returns the input untouched.
    """
    if t < 0:
        raise DomainError(f"scale must be non-negative, got t={t}")
    if t == 0:
        return signal
    signal = np.asarray(signal)
    if radius is None:
        radius = default_radius(t)
    if signal.ndim == 1:
        g = gaussian_kernel(t, radius, dim=1).values
        out = conv2d(signal[None, None, None, :], g[None, None, None, :], mode="same")
        return out[0, 0, 0]
    g = gaussian_kernel(t, radius, dim=2).values[None, None]
    if signal.ndim == 2:
        return conv2d(signal[None, None], g, mode="same")[0, 0]
    if signal.ndim == 4:
        b, c, h, w = signal.shape
        out = conv2d(signal.reshape(b * c, 1, h, w), g, mode="same")
        return out.reshape(b, c, h, w)
    raise ShapeError(f"signal must be rank 1, 2 or 4, got shape {signal.shape}")


@dataclass(frozen=True)
class ScaleOracleSpec:
    omega: float
    m: int
    gamma: float
    t_grid: tuple[float, ...] = ()

    def __post_init__(self):
        if not self.omega > 0:
            raise DomainError(f"omega must be positive, got {self.omega}")
        if self.m < 0 or int(self.m) != self.m:
            raise DomainError(f"derivative order must be a non-negative integer, got {self.m}")
        grid = tuple(float(t) for t in self.t_grid)
        object.__setattr__(self, "t_grid", grid)
        if grid:
            arr = np.asarray(grid)
            if np.any(arr <= 0) or np.any(np.diff(arr) <= 0):
                raise DomainError("t_grid must be strictly increasing and positive")

    @property
    def analytic_peak(self) -> float:
        """Scale maximizing ``t^(m gamma) omega^m exp(-omega^2 t / 2)``: ``2 m gamma / omega^2``."""
        return 2.0 * self.m * self.gamma / self.omega ** 2


def normalized_derivative_amplitude(spec: ScaleOracleSpec, t: float) -> float:
    """Closed-form amplitude of the m-th normalized derivative of ``sin(omega x)`` at scale t.

    At ``t == 0`` with ``m * gamma > 0`` the limit value 0 is returned.
    """
    if t < 0:
        raise DomainError(f"scale must be non-negative, got t={t}")
    power = spec.m * spec.gamma
    if t == 0:
        return 0.0 if power > 0 else spec.omega ** spec.m
    return t ** power * spec.omega ** spec.m * math.exp(-spec.omega ** 2 * t / 2.0)


def central_difference_stencil(order: int, h: float) -> np.ndarray:
    """Centered finite-difference stencil for the ``order``-th derivative with step ``h``."""
    stencil = np.ones(1)
    for _ in range(order // 2):
        stencil = np.convolve(stencil, [1.0, -2.0, 1.0])
    if order % 2:
        stencil = np.convolve(stencil, [-0.5, 0.0, 0.5])
    return stencil / h ** order


def empirical_amplitude_curve(spec: ScaleOracleSpec, grid_resolution: float = 0.1) -> np.ndarray:
    """Measured normalized-derivative amplitude of a sampled sinusoid at every scale of ``spec.t_grid``."""
    if not spec.t_grid:
        raise DomainError("t_grid is empty")
    h = float(grid_resolution)
    if not h > 0:
        raise DomainError(f"grid resolution must be positive, got {h}")
    stencil = central_difference_stencil(spec.m, h)
    half = len(stencil) // 2
    max_radius = default_radius(spec.t_grid[-1] / h ** 2)
    border = 3 * max_radius + half
    period = 2.0 * math.pi / spec.omega / h
    n = 4 * max(border, math.ceil(period))
    x = (np.arange(n) - n // 2) * h
    signal = np.sin(spec.omega * x)
    interior = slice(n // 4, n - n // 4)
    power = spec.m * spec.gamma
    amps = np.empty(len(spec.t_grid))
    for i, t in enumerate(spec.t_grid):
        smoothed = scale_space_rep(signal, t / h ** 2, default_radius(t / h ** 2))
        deriv = np.convolve(smoothed, stencil[::-1], mode="same") if spec.m else smoothed
        amps[i] = t ** power * np.abs(deriv[interior]).max()
    return amps


def empirical_scale_peak(spec: ScaleOracleSpec, grid_resolution: float = 0.1) -> tuple[float, float]:
    """Grid argmax of the measured normalized-derivative amplitude.

    Raises ``DomainError`` when the maximum sits on either end of the grid,
    since the grid then does not bracket the peak.
    """
    amps = empirical_amplitude_curve(spec, grid_resolution)
    i = int(np.argmax(amps))
    if i == 0 or i == len(amps) - 1:
        raise DomainError(
            f"amplitude peak at grid boundary t={spec.t_grid[i]}; grid does not bracket the maximum"
        )
    return spec.t_grid[i], float(amps[i])


def _laplacian(f: np.ndarray) -> np.ndarray:
    """5-point (3-point in 1-D) discrete Laplacian, computed on all but the outermost ring."""
    if f.ndim == 1:
        out = np.zeros_like(f)
        out[1:-1] = f[2:] + f[:-2] - 2.0 * f[1:-1]
        return out
    out = np.zeros_like(f)
    out[1:-1, 1:-1] = (f[2:, 1:-1] + f[:-2, 1:-1] + f[1:-1, 2:] + f[1:-1, :-2]
                       - 4.0 * f[1:-1, 1:-1])
    return out


def heat_equation_residual(signal: np.ndarray, t_samples: Sequence[float],
                           radius: int | None = None) -> float:
    """Normalized interior RMS of ``dF/dt - (1/2) Laplacian(F)`` across sampled scales.

    The scale derivative is a central difference over consecutive samples;
    returns 0 when both sides vanish.
    """
    ts = np.asarray(t_samples, dtype=np.float64)
    if ts.size < 3:
        raise DomainError("need at least 3 scale samples")
    steps = np.diff(ts)
    if np.any(steps <= 0) or not np.allclose(steps, steps[0], rtol=1e-9, atol=0):
        raise DomainError("scale samples must be strictly increasing and equally spaced")
    signal = np.asarray(signal, dtype=np.float64)
    if signal.ndim not in (1, 2):
        raise ShapeError(f"signal must be 1-D or 2-D, got shape {signal.shape}")
    if radius is None:
        radius = default_radius(ts[-1])
    stack = [scale_space_rep(signal, t, radius) for t in ts]
    dt = steps[0]
    b = radius + 1
    core = (slice(b, -b),) * signal.ndim
    if any(s <= 2 * b for s in signal.shape):
        raise ShapeError(f"signal too small for interior border {b}")
    resid, rhs = [], []
    for k in range(1, len(ts) - 1):
        d_t = (stack[k + 1] - stack[k - 1]) / (2.0 * dt)
        half_lap = 0.5 * _laplacian(stack[k])
        resid.append((d_t - half_lap)[core])
        rhs.append(half_lap[core])
    resid_rms = math.sqrt(np.mean(np.square(resid)))
    rhs_rms = math.sqrt(np.mean(np.square(rhs)))
    scale = 1e-12 * (np.abs(signal).max() + 1.0)
    if rhs_rms <= scale:
        return 0.0 if resid_rms <= scale else math.inf
    return resid_rms / rhs_rms


def count_local_extrema(signal: np.ndarray) -> int:
    """Number of strict local maxima plus strict local minima of a 1-D signal."""
    s = np.asarray(signal)
    left, mid, right = s[:-2], s[1:-1], s[2:]
    return int(np.sum((mid > left) & (mid > right)) + np.sum((mid < left) & (mid < right)))
