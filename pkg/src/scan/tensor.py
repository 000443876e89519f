"""Dense-array primitives: direct 2-D convolution, activations, classifier head,
loss, and a central-difference gradient checker.

Arrays are plain ``numpy.ndarray`` objects. Feature maps are laid out as
(batch, channel, height, width) and kernel banks as
(out_channel, in_channel, height, width). Convolution is cross-correlation
(no kernel flip).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .errors import NonFiniteError, ShapeError

MODES = ("valid", "same")


def check_finite(x: np.ndarray, what: str = "result") -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise NonFiniteError(f"{what} contains NaN or Inf")
    return x


def _check_conv_shapes(x: np.ndarray, kernel: np.ndarray, mode: str) -> None:
    if mode not in MODES:
        raise ValueError(f"unknown convolution mode {mode!r}; expected one of {MODES}")
    if x.ndim != 4:
        raise ShapeError(f"input must be rank 4 (batch, channel, h, w), got shape {x.shape}")
    if kernel.ndim != 4:
        raise ShapeError(f"kernel must be rank 4 (out, in, h, w), got shape {kernel.shape}")
    if kernel.shape[1] != x.shape[1]:
        raise ShapeError(
            f"kernel in-channels {kernel.shape[1]} != input channels {x.shape[1]}"
        )
    kh, kw = kernel.shape[2:]
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError(f"kernel spatial extents must be odd, got {kh}x{kw}")
    if mode == "valid" and (kh > x.shape[2] or kw > x.shape[3]):
        raise ShapeError(
            f"kernel {kh}x{kw} larger than input {x.shape[2]}x{x.shape[3]} in valid mode"
        )


def _pad(x: np.ndarray, ph: int, pw: int) -> np.ndarray:
    if ph == 0 and pw == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))


def conv2d(x: np.ndarray, kernel: np.ndarray, mode: str = "valid") -> np.ndarray:
    """Cross-correlate a batch of feature maps with a kernel bank.

    ``valid`` returns (H-h+1, W-w+1) maps; ``same`` zero-pads by (h-1)/2 and
    returns (H, W) maps.
    """
    _check_conv_shapes(x, kernel, mode)
    kh, kw = kernel.shape[2:]
    if mode == "same":
        x = _pad(x, (kh - 1) // 2, (kw - 1) // 2)
    ho, wo = x.shape[2] - kh + 1, x.shape[3] - kw + 1
    dtype = np.result_type(x, kernel)
    out = np.zeros((kernel.shape[0], x.shape[0], ho, wo), dtype=dtype)
    for p in range(kh):
        for q in range(kw):
            # (O, C) . (B, C, ho, wo) -> (O, B, ho, wo)
            out += np.tensordot(kernel[:, :, p, q], x[:, :, p:p + ho, q:q + wo], axes=([1], [1]))
    return check_finite(out.transpose(1, 0, 2, 3), "conv2d output")


def conv2d_backward(
    x: np.ndarray, kernel: np.ndarray, grad_out: np.ndarray, mode: str = "valid"
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of ``sum(grad_out * conv2d(x, kernel, mode))`` w.r.t. x and kernel."""
    _check_conv_shapes(x, kernel, mode)
    kh, kw = kernel.shape[2:]
    ph, pw = ((kh - 1) // 2, (kw - 1) // 2) if mode == "same" else (0, 0)
    xp = _pad(x, ph, pw)
    ho, wo = xp.shape[2] - kh + 1, xp.shape[3] - kw + 1
    expected = (x.shape[0], kernel.shape[0], ho, wo)
    if grad_out.shape != expected:
        raise ShapeError(f"upstream gradient shape {grad_out.shape} != output shape {expected}")
    grad_xp = np.zeros_like(xp, dtype=np.result_type(xp, kernel, grad_out))
    grad_k = np.empty_like(kernel, dtype=grad_xp.dtype)
    for p in range(kh):
        for q in range(kw):
            window = xp[:, :, p:p + ho, q:q + wo]
            grad_k[:, :, p, q] = np.tensordot(grad_out, window, axes=([0, 2, 3], [0, 2, 3]))
            # (B, O, ho, wo) . (O, C) -> (B, ho, wo, C)
            contrib = np.tensordot(grad_out, kernel[:, :, p, q], axes=([1], [0]))
            grad_xp[:, :, p:p + ho, q:q + wo] += contrib.transpose(0, 3, 1, 2)
    grad_x = grad_xp[:, :, ph:ph + x.shape[2], pw:pw + x.shape[3]]
    return grad_x, grad_k


def conv2d_input_grad(kernel: np.ndarray, grad_out: np.ndarray, mode: str = "valid") -> np.ndarray:
    """Gradient w.r.t. the input only; cheaper than :func:`conv2d_backward` when the kernel is frozen."""
    kh, kw = kernel.shape[2:]
    if grad_out.ndim != 4 or grad_out.shape[1] != kernel.shape[0]:
        raise ShapeError(f"upstream gradient {grad_out.shape} incompatible with kernel {kernel.shape}")
    ph, pw = ((kh - 1) // 2, (kw - 1) // 2) if mode == "same" else (0, 0)
    b, _, ho, wo = grad_out.shape
    hp, wp = ho + kh - 1, wo + kw - 1
    grad_xp = np.zeros((b, kernel.shape[1], hp, wp), dtype=np.result_type(kernel, grad_out))
    for p in range(kh):
        for q in range(kw):
            contrib = np.tensordot(grad_out, kernel[:, :, p, q], axes=([1], [0]))
            grad_xp[:, :, p:p + ho, q:q + wo] += contrib.transpose(0, 3, 1, 2)
    return grad_xp[:, :, ph:hp - ph, pw:wp - pw]


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    return grad_out * (x > 0)


def gap_linear(features: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Global average pool over space, then an affine map to class logits."""
    if features.ndim != 4:
        raise ShapeError(f"features must be rank 4, got shape {features.shape}")
    if weights.ndim != 2 or weights.shape[1] != features.shape[1]:
        raise ShapeError(
            f"weights shape {weights.shape} incompatible with {features.shape[1]} channels"
        )
    if bias.shape != (weights.shape[0],):
        raise ShapeError(f"bias shape {bias.shape} != ({weights.shape[0]},)")
    pooled = features.mean(axis=(2, 3))
    return check_finite(pooled @ weights.T + bias, "logits")


def gap_linear_backward(
    features: np.ndarray, weights: np.ndarray, grad_logits: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (grad_features, grad_weights, grad_bias)."""
    h, w = features.shape[2:]
    pooled = features.mean(axis=(2, 3))
    grad_w = grad_logits.T @ pooled
    grad_b = grad_logits.sum(axis=0)
    grad_pooled = grad_logits @ weights
    grad_f = np.broadcast_to(grad_pooled[:, :, None, None] / (h * w), features.shape).copy()
    return grad_f, grad_w, grad_b


def softmax_cross_entropy(logits: np.ndarray, labels) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy over the batch and its gradient w.r.t. logits."""
    labels = np.asarray(labels)
    if logits.ndim != 2:
        raise ShapeError(f"logits must be (batch, classes), got {logits.shape}")
    if labels.shape != (logits.shape[0],):
        raise ShapeError(f"labels shape {labels.shape} != ({logits.shape[0]},)")
    n, classes = logits.shape
    if np.any(labels < 0) or np.any(labels >= classes):
        raise ValueError(f"labels must lie in [0, {classes})")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_p = shifted - log_z
    rows = np.arange(n)
    loss = -log_p[rows, labels].mean()
    grad = np.exp(log_p)
    grad[rows, labels] -= 1.0
    grad /= n
    check_finite(np.asarray(loss), "cross-entropy loss")
    return float(loss), grad


@dataclass
class GradReport:
    max_rel_error: dict[str, float]
    epsilon: float
    threshold: float
    worst: dict[str, tuple[int, ...]] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(err < self.threshold for err in self.max_rel_error.values())

    @property
    def overall(self) -> float:
        return max(self.max_rel_error.values(), default=0.0)

    def __str__(self) -> str:
        rows = ", ".join(f"{k}={v:.2e}" for k, v in self.max_rel_error.items())
        status = "PASS" if self.passed else "FAIL"
        return f"gradcheck {status} (eps={self.epsilon:g}, thr={self.threshold:g}): {rows}"


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return np.abs(analytic - numeric) / denom


LossFn = Callable[[Mapping[str, np.ndarray]], "tuple[float, Mapping[str, np.ndarray]]"]


def finite_difference_gradcheck(
    loss_fn: LossFn,
    params: Mapping[str, np.ndarray],
    epsilon: float = 1e-5,
    threshold: float = 1e-4,
) -> GradReport:
    """Compare analytic gradients against central differences, coordinate by coordinate.

    ``loss_fn(params)`` must return ``(loss, grads)`` where ``grads`` maps the
    same names as ``params``. Parameters are copied, never mutated.
    """
    params = {name: np.array(value, dtype=np.float64) for name, value in params.items()}
    loss0, analytic = loss_fn(params)
    if not np.isfinite(loss0):
        raise NonFiniteError(f"loss is not finite: {loss0}")
    report = GradReport({}, epsilon, threshold)
    for name, value in params.items():
        numeric = np.zeros_like(value)
        for idx in np.ndindex(value.shape):
            orig = value[idx]
            value[idx] = orig + epsilon
            plus = loss_fn(params)[0]
            value[idx] = orig - epsilon
            minus = loss_fn(params)[0]
            value[idx] = orig
            if not (np.isfinite(plus) and np.isfinite(minus)):
                raise NonFiniteError(f"loss not finite while perturbing {name}{idx}")
            numeric[idx] = (plus - minus) / (2 * epsilon)
        grad = np.asarray(analytic[name], dtype=np.float64)
        if grad.shape != value.shape:
            raise ShapeError(f"analytic gradient for {name} has shape {grad.shape}, want {value.shape}")
        err = relative_error(grad, numeric)
        report.max_rel_error[name] = float(err.max()) if err.size else 0.0
        if err.size:
            report.worst[name] = tuple(int(i) for i in np.unravel_index(err.argmax(), err.shape))
    return report
