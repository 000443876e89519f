"""Response-maximization loss, gradient assembly with per-layer RMO cutoff,
SGD with momentum, and the training / evaluation loops."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, DatasetSpec, synth_dataset
from .errors import DomainError, NonFiniteError, ShapeError
from .network import SacNetwork
from .sac import sac_backward
from .tensor import conv2d_backward, gap_linear_backward, relu_backward, softmax_cross_entropy

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RmoConfig:
    lam: float = 1.0
    enabled: bool = True
    aggregation: str = "sum"

    def __post_init__(self):
        if self.lam < 0:
            raise DomainError(f"lambda must be >= 0, got {self.lam}")
        if self.aggregation not in ("sum", "mean"):
            raise DomainError(f"aggregation must be 'sum' or 'mean', got {self.aggregation!r}")


@dataclass
class LossBreakdown:
    rec: float
    scale_per_layer: list[float]
    total: float


def rmo_loss(f_out: np.ndarray, lam: float = 1.0) -> float:
    """``exp(-lam * mean_b ||f_out[b]||_2 / (H W))`` for a (batch, channel, H, W) response."""
    return rmo_loss_and_grad(f_out, lam)[0]


def rmo_loss_and_grad(f_out: np.ndarray, lam: float = 1.0) -> tuple[float, np.ndarray]:
    if f_out.ndim != 4:
        raise ShapeError(f"f_out must be rank 4, got {f_out.shape}")
    b, _, h, w = f_out.shape
    norms = np.sqrt(np.square(f_out).sum(axis=(1, 2, 3)))
    loss = math.exp(-lam * float(norms.mean()) / (h * w))
    # d||f||/df = f/||f||; zero subgradient at f = 0
    safe = np.where(norms > 0, norms, 1.0)
    grad = f_out / safe[:, None, None, None] * (norms > 0)[:, None, None, None]
    grad *= -lam * loss / (b * h * w)
    return loss, grad


def total_loss(rec: float, scale_terms: list[float], config: RmoConfig) -> LossBreakdown:
    terms = list(scale_terms)
    if not config.enabled or not terms:
        return LossBreakdown(rec, terms, rec)
    agg = sum(terms) if config.aggregation == "sum" else sum(terms) / len(terms)
    return LossBreakdown(rec, terms, rec + agg)


def compute_gradients(net: SacNetwork, x: np.ndarray, y: np.ndarray, rmo: RmoConfig
                      ) -> tuple[LossBreakdown, dict[str, np.ndarray]]:
    """Loss breakdown and gradients of the total loss for every trainable array.

    The recognition loss is back-propagated through the whole stack. Each
    layer's response-maximization term reaches only that layer's own
    parameters: its gradient is added to the layer's upstream signal for the
    parameter update but never propagated to the layer input.
    """
    logits = net.forward(x)
    rec, grad_logits = softmax_cross_entropy(logits, y)
    cache = net._caches
    feats = cache["features"]
    grad_h, grads_w, grads_b = gap_linear_backward(feats, net.head_w, grad_logits)
    grads: dict[str, np.ndarray] = {"head.w": grads_w, "head.b": grads_b}
    use_rmo = rmo.enabled and net.form == "sac"
    weight = 1.0 if rmo.aggregation == "sum" else 1.0 / max(net.depth, 1)
    scale_terms = []
    for i in reversed(range(net.depth)):
        pre, inp = cache["pres"][i], cache["inputs"][i]
        grad_pre = relu_backward(pre, grad_h)
        need_input = i > 0
        if net.form == "sac":
            layer = net.layers[i]
            if use_rmo:
                l_scale, g_scale = rmo_loss_and_grad(pre, rmo.lam)
                scale_terms.append(l_scale)
                g = sac_backward(inp, layer, grad_pre + weight * g_scale, need_input=need_input,
                                 input_upstream=grad_pre if need_input else None)
            else:
                g = sac_backward(inp, layer, grad_pre, need_input=need_input)
            grads[f"{i}.k"] = g.k
            grads[f"{i}.theta"] = g.theta
            if layer.lsc:
                grads[f"{i}.k_i"] = g.k_i
            grad_h = g.input
        else:
            if need_input:
                grad_h, gk = conv2d_backward(inp, net.kernels[i], grad_pre, mode="same")
            else:
                _, gk = conv2d_backward(inp, net.kernels[i], grad_pre, mode="same")
            grads[f"{i}.w"] = gk
    scale_terms.reverse()
    return total_loss(rec, scale_terms, rmo if use_rmo else RmoConfig(rmo.lam, False)), grads


def scale_term_only_gradients(net: SacNetwork, x: np.ndarray, layer_index: int, lam: float = 1.0
                              ) -> dict[str, np.ndarray]:
    """Gradients of one layer's RMO term alone, zero-filled for every other parameter."""
    net.forward(x)
    pre, inp = net._caches["pres"][layer_index], net._caches["inputs"][layer_index]
    _, g_scale = rmo_loss_and_grad(pre, lam)
    grads = {name: np.zeros_like(p) for name, p in net.params().items()}
    g = sac_backward(inp, net.layers[layer_index], g_scale, need_input=False)
    grads[f"{layer_index}.k"] = g.k
    grads[f"{layer_index}.theta"] = g.theta
    if net.layers[layer_index].lsc:
        grads[f"{layer_index}.k_i"] = g.k_i
    return grads


@dataclass
class SgdMomentum:
    lr: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 1e-4
    velocity: dict[str, np.ndarray] = field(default_factory=dict)

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        for name, p in params.items():
            g = grads[name]
            if self.weight_decay and _decayed(name):
                g = g + self.weight_decay * p
            v = self.velocity.get(name)
            v = g.copy() if v is None else self.momentum * v + g
            self.velocity[name] = v
            p -= (self.lr * v).astype(p.dtype, copy=False)


def _decayed(name: str) -> bool:
    # no decay on scales or biases
    return not (name.endswith(".theta") or name.endswith(".b"))


def _diagnostics(net: SacNetwork) -> str:
    parts = []
    for i, pre in enumerate(net._caches.get("pres", [])):
        parts.append(f"layer {i}: |f_out|={np.linalg.norm(pre):.3e}")
    if net.form == "sac":
        for i, layer in enumerate(net.layers):
            parts.append(f"layer {i}: t in [{layer.t.min():.3e}, {layer.t.max():.3e}]")
    return "; ".join(parts)


def train_step(net: SacNetwork, x: np.ndarray, y: np.ndarray, opt: SgdMomentum,
               rmo: RmoConfig) -> LossBreakdown:
    """One SGD-with-momentum update in place; returns the pre-update losses."""
    try:
        breakdown, grads = compute_gradients(net, x, y, rmo)
    except NonFiniteError as exc:
        raise NonFiniteError(f"{exc}; {_diagnostics(net)}") from exc
    if not math.isfinite(breakdown.total):
        raise NonFiniteError(f"non-finite loss {breakdown.total}; {_diagnostics(net)}")
    opt.step(net.params(), grads)
    return breakdown


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 7
    widths: tuple[int, ...] = (8, 8)
    epochs: int = 5
    lr: float = 0.05
    batch_size: int = 64
    momentum: float = 0.9
    weight_decay: float = 1e-4
    lr_drop: float = 0.7
    rmo: RmoConfig = RmoConfig()
    lsc: bool = True
    sac: bool = True
    dtype: str = "float64"
    dataset: DatasetSpec = DatasetSpec()


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    loss: LossBreakdown
    train_accuracy: float
    mean_t: list[float]


def _mean_breakdown(items: list[LossBreakdown], weights: list[int]) -> LossBreakdown:
    w = np.asarray(weights, dtype=np.float64) / sum(weights)
    rec = float(np.dot(w, [b.rec for b in items]))
    total = float(np.dot(w, [b.total for b in items]))
    per = np.asarray([b.scale_per_layer for b in items], dtype=np.float64)
    scale = list(map(float, w @ per)) if per.size else []
    return LossBreakdown(rec, scale, total)


def train(config: TrainConfig, data: Dataset | None = None, config_hash: str = ""
          ) -> tuple[SacNetwork, list[EpochRecord]]:
    """Train from scratch; fully determined by ``config`` (and ``data`` if given)."""
    if data is None:
        data = synth_dataset(config.dataset)
    dtype = np.dtype(config.dtype)
    net = SacNetwork.init(data.channels, list(config.widths), data.classes, config.seed,
                          lsc=config.lsc, form="sac" if config.sac else "absorbed",
                          dtype=dtype, config_hash=config_hash)
    if data.train_x.shape[1] != net.kernel_shapes()[0][1]:
        raise ShapeError("dataset channels do not match the first layer")
    opt = SgdMomentum(config.lr, config.momentum, config.weight_decay)
    rng = np.random.default_rng([config.seed, 0x5CA])
    x_all = data.train_x.astype(dtype)
    drop_epoch = int(math.floor(config.lr_drop * config.epochs))
    history = []
    for epoch in range(config.epochs):
        opt.lr = config.lr * (0.1 if epoch >= drop_epoch and config.epochs > 1 else 1.0)
        order = rng.permutation(len(x_all))
        losses, sizes = [], []
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            b = train_step(net, x_all[idx], data.train_y[idx], opt, config.rmo)
            losses.append(b)
            sizes.append(len(idx))
        acc = evaluate(net, x_all, data.train_y).accuracy
        mean_t = [float(t.mean()) for t in net.scales()] if net.form == "sac" else []
        rec = EpochRecord(epoch, opt.lr, _mean_breakdown(losses, sizes), acc, mean_t)
        log.info("epoch %d lr %.4g loss %.4f (rec %.4f) acc %.3f", epoch, opt.lr,
                 rec.loss.total, rec.loss.rec, acc)
        history.append(rec)
    return net, history


@dataclass
class EvalResult:
    accuracy: float
    per_class: dict[int, float]
    predictions: np.ndarray


def evaluate(net: SacNetwork, x: np.ndarray, y: np.ndarray) -> EvalResult:
    preds = net.predict(x.astype(net.dtype, copy=False))
    y = np.asarray(y)
    per_class = {int(c): float((preds[y == c] == c).mean()) for c in np.unique(y)}
    acc = float((preds == y).mean()) if len(y) else 0.0
    return EvalResult(acc, per_class, preds)
