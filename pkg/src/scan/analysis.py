"""Diagnostics for trained SAC networks: learnt-scale histograms, spectral
kernel decomposition with x-pass classification, and Gaussian window
truncation."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ShapeError
from .network import SacNetwork
from .sac import GAUSS_RADIUS
from .scale_space import normalized_gaussian_with_dt

HIGH_LOW_FACTOR = 1.2
ALLPASS_TOL = 0.05
TRANSFORM_SIZE = 16
RESPONSE_SIZE = 32


@dataclass
class ScaleHistogram:
    layer: int
    bin_width: float
    centers: np.ndarray
    densities: np.ndarray

    @property
    def mode(self) -> float:
        return float(self.centers[np.argmax(self.densities)])

    @property
    def total_mass(self) -> float:
        return float(self.densities.sum() * self.bin_width)


def histogram_of(values: np.ndarray, bin_width: float = 0.1, layer: int = 0) -> ScaleHistogram:
    """Density histogram on bins ``[j w, (j+1) w)``; only occupied bins are kept."""
    if bin_width <= 0:
        raise DomainError("bin width must be positive")
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size == 0:
        raise DomainError("no values to histogram")
    idx = np.floor(values / bin_width).astype(np.int64)
    bins, counts = np.unique(idx, return_counts=True)
    centers = (bins + 0.5) * bin_width
    densities = counts / (values.size * bin_width)
    return ScaleHistogram(layer, bin_width, centers, densities)


def scale_histogram(net: SacNetwork, bin_width: float = 0.1) -> list[ScaleHistogram]:
    if net.form != "sac":
        raise DomainError("absorbed model has no scale parameters; analyze the SAC-form model")
    return [histogram_of(layer.t, bin_width, i) for i, layer in enumerate(net.layers)]


def fraction_below(net: SacNetwork, threshold: float = 0.1) -> float:
    ts = np.concatenate(net.scales())
    return float((ts < threshold).mean())


# spectral decomposition ---------------------------------------------------

def embed_centered(kernel: np.ndarray, size: int) -> np.ndarray:
    """Zero-pad an odd kernel to ``size x size`` with its center moved to index (0, 0)."""
    kh, kw = kernel.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError(f"kernel extents must be odd, got {kernel.shape}")
    if kh > size or kw > size:
        raise ShapeError(f"kernel {kernel.shape} exceeds transform size {size}")
    out = np.zeros((size, size), dtype=np.float64)
    out[:kh, :kw] = kernel
    return np.roll(out, (-(kh // 2), -(kw // 2)), axis=(0, 1))


def center_crop(periodic: np.ndarray, extent: int) -> np.ndarray:
    """Inverse of :func:`embed_centered`: the ``extent x extent`` window around index (0, 0)."""
    r = extent // 2
    return np.roll(periodic, (r, r), axis=(0, 1))[:extent, :extent].copy()


def full_convolution(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Direct 2-D linear convolution (with flip), output size ``a + b - 1``."""
    ha, wa = a.shape
    hb, wb = b.shape
    out = np.zeros((ha + hb - 1, wa + wb - 1))
    for i in range(ha):
        for j in range(wa):
            out[i:i + hb, j:j + wb] += a[i, j] * b
    return out


@dataclass
class FilterAnalysis:
    k_a: np.ndarray
    k_a_full: np.ndarray
    epsilon: float
    residual: float
    rel_residual: float
    xpass_class: str = ""
    dc_gain: float = float("nan")
    high_gain: float = float("nan")
    k_xpass: np.ndarray | None = None


def filter_decomposition(k: np.ndarray, k_i: np.ndarray, epsilon: float | None = None,
                         size: int = TRANSFORM_SIZE, crop: int = 3) -> FilterAnalysis:
    """Estimate ``k_a`` with ``k = k_a * k_i`` by regularized spectral division.

    ``epsilon`` defaults to ``1e-8 * max |FFT(k_i)|^2``. The residual uses the
    uncropped estimate.
    """
    k = np.asarray(k, dtype=np.float64)
    k_i = np.asarray(k_i, dtype=np.float64)
    if not np.any(k_i):
        raise DomainError("shortcut kernel is identically zero; deconvolution undefined")
    fk = np.fft.fft2(embed_centered(k, size))
    fi = np.fft.fft2(embed_centered(k_i, size))
    power = np.abs(fi) ** 2
    if epsilon is None:
        epsilon = 1e-8 * float(power.max())
    fa = fk * np.conj(fi) / (power + epsilon)
    k_a_full = np.real(np.fft.ifft2(fa))
    recon = np.real(np.fft.ifft2(np.fft.fft2(k_a_full) * fi))
    target = embed_centered(k, size)
    residual = float(np.linalg.norm(target - recon))
    norm_k = float(np.linalg.norm(k))
    rel = residual / norm_k if norm_k > 0 else 0.0
    return FilterAnalysis(center_crop(k_a_full, crop), k_a_full, float(epsilon), residual, rel)


def xpass_operator(k_a: np.ndarray, t: float, gamma_m: float = 1.0) -> np.ndarray:
    """``t^gamma_m (g * k_a) + unit impulse`` with the layer's 5x5 unit-sum Gaussian."""
    g, _ = normalized_gaussian_with_dt(t, GAUSS_RADIUS)
    op = t ** gamma_m * full_convolution(g, np.asarray(k_a, dtype=np.float64))
    c = op.shape[0] // 2, op.shape[1] // 2
    op[c] += 1.0
    return op


def frequency_gains(op: np.ndarray, size: int = RESPONSE_SIZE) -> tuple[float, float]:
    """(DC gain, mean gain over max-norm frequencies above pi/2) of a 2-D operator."""
    resp = np.abs(np.fft.fft2(embed_centered(op, size)))
    w = np.abs(2 * np.pi * np.fft.fftfreq(size))
    outer = np.maximum(w[:, None], w[None, :]) > np.pi / 2
    return float(resp[0, 0]), float(resp[outer].mean())


def classify_gains(dc: float, high: float) -> str:
    """Class from the gain ratio alone, so positive rescaling never changes it."""
    if dc == 0 and high == 0:
        return "mixed"
    if high > HIGH_LOW_FACTOR * dc:
        return "high-pass"
    if dc > HIGH_LOW_FACTOR * high:
        return "low-pass"
    if abs(high - dc) <= ALLPASS_TOL * max(dc, high):
        return "all-pass"
    return "mixed"


def classify_xpass(k_a: np.ndarray, t: float, gamma_m: float = 1.0) -> tuple[str, float, float, np.ndarray]:
    op = xpass_operator(k_a, t, gamma_m)
    dc, high = frequency_gains(op)
    return classify_gains(dc, high), dc, high, op


def xpass_classification(k: np.ndarray, k_i: np.ndarray, t: float, gamma_m: float = 1.0,
                         epsilon: float | None = None) -> FilterAnalysis:
    fa = filter_decomposition(k, k_i, epsilon)
    fa.xpass_class, fa.dc_gain, fa.high_gain, fa.k_xpass = classify_xpass(fa.k_a, t, gamma_m)
    return fa


def analyze_layer(net: SacNetwork, layer_index: int, epsilon: float | None = None) -> list[dict]:
    """One row per (filter, input channel) pair of a SAC layer."""
    if net.form != "sac":
        raise DomainError("absorbed model has no k / k_i / t to decompose; analyze the SAC-form model")
    if not 0 <= layer_index < net.depth:
        raise DomainError(f"layer index {layer_index} out of range 0..{net.depth - 1}")
    layer = net.layers[layer_index]
    if not layer.lsc:
        raise DomainError("layer has no shortcut kernel to decompose against")
    rows = []
    for o in range(layer.out_channels):
        t = float(layer.t[o])
        for c in range(layer.in_channels):
            fa = xpass_classification(layer.k[o, c], layer.k_i[o, c], t, layer.gamma_m, epsilon)
            rows.append({"layer": layer_index, "filter": o, "channel": c, "t": t,
                         "class": fa.xpass_class, "dc_gain": fa.dc_gain, "high_gain": fa.high_gain,
                         "rel_residual": fa.rel_residual, "epsilon": fa.epsilon})
    return rows


# truncation ---------------------------------------------------------------

def truncation_mass(t: float, radius: int = GAUSS_RADIUS) -> float:
    """Share of the sampled Gaussian's lattice mass that falls outside the ``2 radius + 1`` window."""
    if not t > 0:
        raise DomainError(f"scale must be positive, got t={t}")
    wide = radius + math.ceil(12 * math.sqrt(t)) + 2
    n = np.arange(-wide, wide + 1, dtype=np.float64)
    h = np.exp(-n ** 2 / (2 * t))
    inside = h[np.abs(n) <= radius].sum()
    # the 2-D lattice sum factorizes
    return float(1.0 - (inside / h.sum()) ** 2)


def truncation_report(net: SacNetwork) -> list[dict]:
    if net.form != "sac":
        raise DomainError("absorbed model has no scale parameters; analyze the SAC-form model")
    return [{"layer": i, "filter": o, "t": float(t), "truncation_mass": truncation_mass(float(t))}
            for i, layer in enumerate(net.layers) for o, t in enumerate(layer.t)]


# CSV ----------------------------------------------------------------------

def to_csv(rows: list[dict], comment: str = "", columns: list[str] | None = None) -> str:
    buf = io.StringIO()
    if comment:
        buf.write(f"# {comment}\n")
    columns = columns or (list(rows[0]) if rows else [])
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (f"{v:.10g}" if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()


def histogram_rows(hists: list[ScaleHistogram]) -> list[dict]:
    return [{"layer": h.layer, "bin_center": float(c), "density": float(d)}
            for h in hists for c, d in zip(h.centers, h.densities)]
