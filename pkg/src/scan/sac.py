"""Scale-attention convolution layer.

Each output filter ``o`` owns a 3x3 derivative kernel ``k[o]``, a shortcut
kernel ``k_i[o]`` and a scale ``t[o] = exp(theta[o])``. Its response is

    f_out = t^gamma_m * (g(t) * k) (.) f_in + k_i (.) f_in

where ``g(t)`` is the unit-sum 5x5 Gaussian, ``*`` is true convolution kept
to the central 3x3 window and ``(.)`` is same-mode cross-correlation. The
bracketed operator is precomputed by :func:`absorb` for inference.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError
from .scale_space import normalized_gaussian_with_dt
from .tensor import check_finite, conv2d, conv2d_backward, conv2d_input_grad, relu

KERNEL = 3
GAUSS_RADIUS = 2
GAMMA_M = 1.0


def fan_in_uniform(rng: np.random.Generator, shape: tuple[int, ...], dtype=np.float64) -> np.ndarray:
    fan_in = int(np.prod(shape[1:]))
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


@dataclass
class SacLayer:
    k: np.ndarray
    k_i: np.ndarray
    theta: np.ndarray
    lsc: bool = True
    activation: bool = True
    gamma_m: float = GAMMA_M
    last_pre: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.k.ndim != 4 or self.k.shape[2:] != (KERNEL, KERNEL):
            raise ShapeError(f"k must be (out, in, 3, 3), got {self.k.shape}")
        if self.k_i.shape != self.k.shape:
            raise ShapeError(f"k_i shape {self.k_i.shape} != k shape {self.k.shape}")
        if self.theta.shape != (self.k.shape[0],):
            raise ShapeError(f"theta shape {self.theta.shape} != ({self.k.shape[0]},)")

    @classmethod
    def init(cls, in_channels: int, out_channels: int, rng: np.random.Generator,
             lsc: bool = True, activation: bool = True, dtype=np.float64) -> "SacLayer":
        shape = (out_channels, in_channels, KERNEL, KERNEL)
        k = fan_in_uniform(rng, shape, dtype)
        k_i = fan_in_uniform(rng, shape, dtype) if lsc else np.zeros(shape, dtype)
        # t = exp(0) = 1 at start
        return cls(k, k_i, np.zeros(out_channels, dtype), lsc=lsc, activation=activation)

    @property
    def t(self) -> np.ndarray:
        return np.exp(self.theta)

    @property
    def in_channels(self) -> int:
        return self.k.shape[1]

    @property
    def out_channels(self) -> int:
        return self.k.shape[0]

    @property
    def dtype(self):
        return self.k.dtype

    def params(self) -> dict[str, np.ndarray]:
        out = {"k": self.k, "theta": self.theta}
        if self.lsc:
            out["k_i"] = self.k_i
        return out

    def train_param_count(self) -> int:
        return sum(p.size for p in self.params().values())


@dataclass(frozen=True)
class AbsorbedKernel:
    k_s: np.ndarray
    k_u: np.ndarray


def gaussian_bank(t: np.ndarray, dtype=np.float64) -> tuple[np.ndarray, np.ndarray]:
    """Per-filter unit-sum 5x5 Gaussians and their t-derivatives, each (out, 5, 5)."""
    pairs = [normalized_gaussian_with_dt(float(ti), GAUSS_RADIUS) for ti in t]
    g = np.stack([p[0] for p in pairs]).astype(dtype)
    dg = np.stack([p[1] for p in pairs]).astype(dtype)
    return g, dg


def smoothed_kernel(g: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Central 3x3 window of the convolution ``g[o] * k[o, c]`` for every (o, c).

    With a 5x5 ``g`` every window entry is an exact (untruncated) sum, so the
    result is the valid part of the full 7x7 composite.
    """
    out = np.zeros(k.shape, dtype=np.result_type(g, k))
    for p in range(KERNEL):
        for q in range(KERNEL):
            window = g[:, None, 2 - p:5 - p, 2 - q:5 - q]
            out += k[:, :, p:p + 1, q:q + 1] * window
    return out


def smoothed_kernel_backward(g: np.ndarray, k: np.ndarray, grad_out: np.ndarray
                             ) -> tuple[np.ndarray, np.ndarray]:
    """Returns (grad_g, grad_k) for :func:`smoothed_kernel`."""
    grad_g = np.zeros(g.shape, dtype=np.result_type(g, grad_out))
    grad_k = np.empty(k.shape, dtype=grad_g.dtype)
    for p in range(KERNEL):
        for q in range(KERNEL):
            window = g[:, None, 2 - p:5 - p, 2 - q:5 - q]
            grad_k[:, :, p, q] = (grad_out * window).sum(axis=(2, 3))
            grad_g[:, 2 - p:5 - p, 2 - q:5 - q] += np.einsum(
                "oc,ocij->oij", k[:, :, p, q], grad_out)
    return grad_g, grad_k


def _scale_factor(layer: SacLayer) -> np.ndarray:
    return layer.t ** layer.gamma_m


def absorb(layer: SacLayer) -> AbsorbedKernel:
    """Fold the Gaussian, scale factor and shortcut into one 3x3 bank per layer."""
    g, _ = gaussian_bank(layer.t, layer.dtype)
    k_s = _scale_factor(layer)[:, None, None, None].astype(layer.dtype) * smoothed_kernel(g, layer.k)
    k_u = k_s + layer.k_i if layer.lsc else k_s.copy()
    return AbsorbedKernel(check_finite(k_s, "k_s"), check_finite(k_u, "k_u"))


def _check_input(x: np.ndarray, layer: SacLayer) -> None:
    if x.ndim != 4:
        raise ShapeError(f"input must be rank 4, got shape {x.shape}")
    if x.shape[1] != layer.in_channels:
        raise ShapeError(f"input has {x.shape[1]} channels, layer expects {layer.in_channels}")
    if x.shape[2] < 5 or x.shape[3] < 5:
        raise ShapeError(f"spatial extents must be >= 5, got {x.shape[2:]}")


def sac_forward(x: np.ndarray, layer: SacLayer, mode: str = "train") -> np.ndarray:
    """Layer output; the pre-activation response is cached on ``layer.last_pre``.

    ``train`` evaluates the scale-space branch and the shortcut branch as two
    separate convolutions; ``absorbed`` runs one convolution with ``k_u``.
    """
    _check_input(x, layer)
    if mode == "train":
        g, _ = gaussian_bank(layer.t, layer.dtype)
        scaled = conv2d(x, smoothed_kernel(g, layer.k), mode="same")
        pre = _scale_factor(layer)[None, :, None, None].astype(layer.dtype) * scaled
        if layer.lsc:
            pre = pre + conv2d(x, layer.k_i, mode="same")
    elif mode == "absorbed":
        pre = conv2d(x, absorb(layer).k_u, mode="same")
    else:
        raise ValueError(f"unknown mode {mode!r}; expected 'train' or 'absorbed'")
    layer.last_pre = pre
    return relu(pre) if layer.activation else pre


@dataclass
class SacGrads:
    k: np.ndarray
    k_i: np.ndarray
    t: np.ndarray
    theta: np.ndarray
    input: np.ndarray | None

    def as_dict(self) -> dict[str, np.ndarray]:
        return {"k": self.k, "k_i": self.k_i, "theta": self.theta}


def sac_backward(x: np.ndarray, layer: SacLayer, upstream: np.ndarray,
                 need_input: bool = True, input_upstream: np.ndarray | None = None) -> SacGrads:
    """Gradients of ``sum(upstream * pre_activation)`` for every layer parameter.

    The t gradient combines the ``t^gamma_m`` factor with the dependence of the
    renormalized Gaussian on t. Pass ``need_input=False`` to stop the gradient
    at the layer input, or ``input_upstream`` to propagate a different
    upstream signal to the input than the one used for the parameters.
    """
    _check_input(x, layer)
    expected = (x.shape[0], layer.out_channels, x.shape[2], x.shape[3])
    if upstream.shape != expected:
        raise ShapeError(f"upstream shape {upstream.shape} != output shape {expected}")
    t = layer.t
    g, dg = gaussian_bank(t, layer.dtype)
    smooth = smoothed_kernel(g, layer.k)
    scale = _scale_factor(layer).astype(layer.dtype)
    fused = scale[:, None, None, None] * smooth + layer.k_i
    if need_input and input_upstream is None:
        grad_x, grad_w = conv2d_backward(x, fused, upstream, mode="same")
    else:
        grad_w = _kernel_grad(x, upstream)
        grad_x = None
        if need_input:
            grad_x = conv2d_input_grad(fused, input_upstream, mode="same")
    grad_scale = (grad_w * smooth).sum(axis=(1, 2, 3))
    grad_g, grad_k = smoothed_kernel_backward(g, layer.k, scale[:, None, None, None] * grad_w)
    gm = layer.gamma_m
    grad_t = gm * t ** (gm - 1.0) * grad_scale + (grad_g * dg).sum(axis=(1, 2))
    grad_ki = grad_w if layer.lsc else np.zeros_like(layer.k_i)
    return SacGrads(grad_k, grad_ki, grad_t, grad_t * t, grad_x)


def _kernel_grad(x: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    h, w = x.shape[2:]
    grad = np.empty((upstream.shape[1], x.shape[1], KERNEL, KERNEL),
                    dtype=np.result_type(x, upstream))
    for p in range(KERNEL):
        for q in range(KERNEL):
            grad[:, :, p, q] = np.tensordot(upstream, xp[:, :, p:p + h, q:q + w],
                                            axes=([0, 2, 3], [0, 2, 3]))
    return grad


def plain_param_count(in_channels: int, out_channels: int) -> int:
    return out_channels * in_channels * KERNEL * KERNEL


def mults_per_pixel(kernel_bank_shape: tuple[int, ...]) -> int:
    """Multiplies needed per output spatial position by a direct convolution."""
    o, c, kh, kw = kernel_bank_shape
    return o * c * kh * kw
