"""Stacks of SAC (or plain) conv layers with a global-average-pool classifier head."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError
from .sac import KERNEL, SacLayer, absorb, fan_in_uniform, mults_per_pixel, sac_forward
from .tensor import conv2d, gap_linear, relu

FORMS = ("sac", "absorbed")


@dataclass
class SacNetwork:
    """Either a trainable SAC stack (``form == "sac"``) or plain 3x3 kernels (``"absorbed"``).

    An absorbed network holds one ``k_u`` bank per layer in ``kernels``; a
    freshly initialized absorbed network is the plain-conv baseline.
    """

    layers: list[SacLayer]
    kernels: list[np.ndarray]
    head_w: np.ndarray
    head_b: np.ndarray
    form: str = "sac"
    seed: int | None = None
    config_hash: str = ""
    _caches: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.form not in FORMS:
            raise ValueError(f"form must be one of {FORMS}, got {self.form!r}")
        banks = self.kernel_shapes()
        for prev, nxt in zip(banks, banks[1:]):
            if prev[0] != nxt[1]:
                raise ShapeError(f"layer widths incompatible: {prev} feeds {nxt}")
        if banks and self.head_w.shape[1] != banks[-1][0]:
            raise ShapeError(f"head expects {self.head_w.shape[1]} channels, last layer gives {banks[-1][0]}")

    @classmethod
    def init(cls, in_channels: int, widths: list[int], classes: int, seed: int,
             lsc: bool = True, form: str = "sac", dtype=np.float64,
             config_hash: str = "") -> "SacNetwork":
        rng = np.random.default_rng(seed)
        layers, kernels = [], []
        c = in_channels
        for w in widths:
            if form == "sac":
                layers.append(SacLayer.init(c, w, rng, lsc=lsc, dtype=dtype))
            else:
                kernels.append(fan_in_uniform(rng, (w, c, KERNEL, KERNEL), dtype))
            c = w
        head_w = fan_in_uniform(rng, (classes, c), dtype) * np.sqrt(1.0 / 6.0)
        head_b = np.zeros(classes, dtype)
        return cls(layers, kernels, head_w, head_b, form=form, seed=seed, config_hash=config_hash)

    @property
    def depth(self) -> int:
        return len(self.layers) if self.form == "sac" else len(self.kernels)

    @property
    def dtype(self):
        return self.head_w.dtype

    @property
    def classes(self) -> int:
        return self.head_w.shape[0]

    def kernel_shapes(self) -> list[tuple[int, ...]]:
        if self.form == "sac":
            return [layer.k.shape for layer in self.layers]
        return [k.shape for k in self.kernels]

    def params(self) -> dict[str, np.ndarray]:
        """Trainable arrays keyed ``"<layer>.<name>"``, plus ``head.w`` and ``head.b``."""
        out: dict[str, np.ndarray] = {}
        if self.form == "sac":
            for i, layer in enumerate(self.layers):
                for name, value in layer.params().items():
                    out[f"{i}.{name}"] = value
        else:
            for i, k in enumerate(self.kernels):
                out[f"{i}.w"] = k
        out["head.w"] = self.head_w
        out["head.b"] = self.head_b
        return out

    def forward(self, x: np.ndarray, mode: str | None = None) -> np.ndarray:
        """Class logits. ``mode`` picks the SAC evaluation path (``train`` or ``absorbed``)."""
        inputs, pres = [], []
        h = x.astype(self.dtype, copy=False)
        if self.form == "sac":
            mode = mode or "train"
            for layer in self.layers:
                inputs.append(h)
                h = sac_forward(h, layer, mode)
                pres.append(layer.last_pre)
        else:
            for k in self.kernels:
                inputs.append(h)
                pre = conv2d(h, k, mode="same")
                pres.append(pre)
                h = relu(pre)
        self._caches = {"inputs": inputs, "pres": pres, "features": h}
        return gap_linear(h, self.head_w, self.head_b)

    def predict(self, x: np.ndarray, batch_size: int = 256) -> np.ndarray:
        preds = [self.forward(x[i:i + batch_size]).argmax(axis=1) for i in range(0, len(x), batch_size)]
        return np.concatenate(preds) if preds else np.zeros(0, dtype=int)

    def absorbed(self) -> "SacNetwork":
        """Inference copy with each SAC layer folded into its ``k_u`` bank."""
        if self.form == "absorbed":
            return self.copy()
        kernels = [absorb(layer).k_u.copy() for layer in self.layers]
        return SacNetwork([], kernels, self.head_w.copy(), self.head_b.copy(), form="absorbed",
                          seed=self.seed, config_hash=self.config_hash)

    def copy(self) -> "SacNetwork":
        layers = [SacLayer(l.k.copy(), l.k_i.copy(), l.theta.copy(), lsc=l.lsc,
                           activation=l.activation, gamma_m=l.gamma_m) for l in self.layers]
        return SacNetwork(layers, [k.copy() for k in self.kernels], self.head_w.copy(),
                          self.head_b.copy(), form=self.form, seed=self.seed,
                          config_hash=self.config_hash)

    def astype(self, dtype) -> "SacNetwork":
        net = self.copy()
        for layer in net.layers:
            layer.k, layer.k_i, layer.theta = (a.astype(dtype) for a in (layer.k, layer.k_i, layer.theta))
        net.kernels = [k.astype(dtype) for k in net.kernels]
        net.head_w, net.head_b = net.head_w.astype(dtype), net.head_b.astype(dtype)
        return net

    def scales(self) -> list[np.ndarray]:
        if self.form != "sac":
            raise ValueError("absorbed networks carry no scale parameters")
        return [layer.t for layer in self.layers]


@dataclass(frozen=True)
class InferenceCost:
    params: int
    mults_per_pixel: int


def inference_cost(net: SacNetwork) -> InferenceCost:
    """Parameter and multiply counts of the network as deployed (absorbed form)."""
    deployed = net.absorbed() if net.form == "sac" else net
    conv_params = sum(k.size for k in deployed.kernels)
    mults = sum(mults_per_pixel(k.shape) for k in deployed.kernels)
    return InferenceCost(conv_params + deployed.head_w.size + deployed.head_b.size, mults)


def plain_baseline_cost(in_channels: int, widths: list[int], classes: int) -> InferenceCost:
    """Counts for a plain 3x3 conv stack of the same widths, from the layer shapes alone."""
    params, mults, c = 0, 0, in_channels
    for w in widths:
        params += w * c * KERNEL * KERNEL
        mults += w * c * KERNEL * KERNEL
        c = w
    return InferenceCost(params + classes * c + classes, mults)


def train_param_count(net: SacNetwork) -> int:
    return sum(p.size for p in net.params().values())


def config_digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]
