"""Command-line entry point: ``scan <command> ...``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import analysis
from .config import load_config, parse_dataset_arg
from .data import DatasetSpec, synth_dataset
from .errors import DomainError, FormatError, ShapeError
from .network import SacNetwork
from .scale_space import ScaleOracleSpec, empirical_amplitude_curve, empirical_scale_peak, \
    normalized_derivative_amplitude
from .serialize import load_model, save_model
from .training import evaluate, train

PROBE_SEED = 20240
PROBE_SHAPE = (2, None, 16, 16)
PROBE_BORDER = 4


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_train(args) -> int:
    cfg, digest = load_config(args.config)
    net, history = train(cfg, config_hash=digest)
    save_model(net, args.out)
    print("epoch,lr,total,rec,scale_terms,train_acc,mean_t")
    for rec in history:
        scale = ";".join(f"{s:.6g}" for s in rec.loss.scale_per_layer)
        mean_t = ";".join(f"{t:.4g}" for t in rec.mean_t)
        print(f"{rec.epoch},{rec.lr:g},{rec.loss.total:.6g},{rec.loss.rec:.6g},{scale},"
              f"{rec.train_accuracy:.4f},{mean_t}")
    print(f"saved {args.out} (config {digest})")
    return 0


def _dataset(arg: str | None, blur: float | None) -> DatasetSpec:
    spec = parse_dataset_arg(arg) if arg else DatasetSpec()
    if blur is not None:
        spec = DatasetSpec(**{**spec.__dict__, "blur": (blur, blur)})
    return spec


def cmd_eval(args) -> int:
    net = load_model(args.model)
    spec = _dataset(args.dataset, args.blur)
    data = synth_dataset(spec)
    x = data.blur_x if args.blur is not None else data.test_x
    res = evaluate(net, x, data.test_y)
    split = f"blurred (t={args.blur:g})" if args.blur is not None else "clean"
    print(f"split: {split}  samples: {len(data.test_y)}  accuracy: {res.accuracy:.4f}")
    for c, acc in sorted(res.per_class.items()):
        print(f"  class {c}: {acc:.4f}")
    return 0


def cmd_blur_bench(args) -> int:
    spec = _dataset(args.dataset, None)
    if spec.blur is None:
        spec = DatasetSpec(**{**spec.__dict__, "blur": (args.blur_min, args.blur_max)})
    data = synth_dataset(spec)
    print(f"{'model':<32} clean / blurred (t_blur in [{spec.blur[0]:g}, {spec.blur[1]:g}])")
    for path in (args.model_a, args.model_b):
        net = load_model(path)
        clean = evaluate(net, data.test_x, data.test_y).accuracy
        blurred = evaluate(net, data.blur_x, data.test_y).accuracy
        print(f"{Path(path).name:<32} {100 * clean:6.2f} / {100 * blurred:6.2f}")
    return 0


def probe_discrepancy(net: SacNetwork) -> float:
    """Max interior difference of every layer's pre-activation, SAC path vs absorbed kernels."""
    c = net.kernel_shapes()[0][1]
    rng = np.random.default_rng(PROBE_SEED)
    x = rng.standard_normal((PROBE_SHAPE[0], c) + PROBE_SHAPE[2:]).astype(net.dtype)
    plain = net.absorbed()
    net.forward(x, mode="train")
    a = net._caches["pres"]
    plain.forward(x)
    b = plain._caches["pres"]
    core = (slice(None), slice(None), slice(PROBE_BORDER, -PROBE_BORDER), slice(PROBE_BORDER, -PROBE_BORDER))
    return max(float(np.abs(p[core] - q[core]).max()) for p, q in zip(a, b))


def cmd_absorb(args) -> int:
    net = load_model(args.model_in)
    if net.form != "sac":
        raise DomainError(f"{args.model_in} is already in absorbed form")
    plain = net.absorbed()
    save_model(plain, args.model_out)
    print(f"wrote {args.model_out}: {plain.depth} plain 3x3 layers")
    print(f"max interior discrepancy on probe input: {probe_discrepancy(net):.3e}")
    return 0


def cmd_scale_peak(args) -> int:
    n = int(round((args.t_max - args.t_min) / args.t_step)) + 1
    grid = tuple(np.round(args.t_min + args.t_step * np.arange(n), 12))
    spec = ScaleOracleSpec(args.omega, args.order, args.gamma, grid)
    h = args.resolution or (2 * np.pi / args.omega) / 64
    t_hat, _ = empirical_scale_peak(spec, h)
    analytic = spec.analytic_peak
    rel = abs(t_hat - analytic) / analytic if analytic else float("nan")
    amps = empirical_amplitude_curve(spec, h)
    print(f"t_hat={t_hat:.6g} analytic={analytic:.6g} rel_error={rel:.4g}")
    rows = [{"t": t, "amplitude": float(a), "analytic": normalized_derivative_amplitude(spec, t)}
            for t, a in zip(grid, amps)]
    comment = f"omega={args.omega:g} m={args.order} gamma={args.gamma:g} resolution={h:.6g}"
    _emit(analysis.to_csv(rows, comment), args.out)
    return 0


def cmd_hist(args) -> int:
    net = load_model(args.model)
    hists = analysis.scale_histogram(net, args.bin_width)
    comment = f"bin_width={args.bin_width:g}"
    _emit(analysis.to_csv(analysis.histogram_rows(hists), comment, ["layer", "bin_center", "density"]),
          args.out)
    for h in hists:
        print(f"layer {h.layer}: mode t={h.mode:.3g}", file=sys.stderr)
    return 0


def cmd_filters(args) -> int:
    net = load_model(args.model)
    rows = analysis.analyze_layer(net, args.layer, args.epsilon)
    eps = "default 1e-8*max|FFT(k_i)|^2" if args.epsilon is None else f"{args.epsilon:g}"
    comment = (f"high/low factor={analysis.HIGH_LOW_FACTOR} all-pass tol={analysis.ALLPASS_TOL} "
               f"outer band=max-norm freq>pi/2 transform={analysis.TRANSFORM_SIZE} epsilon={eps}")
    _emit(analysis.to_csv(rows, comment), args.out)
    classes = [r["class"] for r in rows]
    summary = ", ".join(f"{c}={classes.count(c)}" for c in ("high-pass", "low-pass", "all-pass", "mixed"))
    print(f"layer {args.layer}: {summary}", file=sys.stderr)
    return 0


def cmd_truncation(args) -> int:
    net = load_model(args.model)
    rows = analysis.truncation_report(net)
    _emit(analysis.to_csv(rows, "window=5x5 mass=1-(window lattice sum / full lattice sum)"), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="scan", description="Scale-attention convolution toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("train", help="train a network from a key=value config")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="accuracy of a model on a dataset")
    s.add_argument("--model", required=True)
    s.add_argument("--dataset", help="config file or inline k=v,... (default synthetic-blobs)")
    s.add_argument("--blur", type=float, help="evaluate on the test split blurred at this t")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("blur-bench", help="clean / blurred accuracy of two models")
    s.add_argument("--model-a", required=True)
    s.add_argument("--model-b", required=True)
    s.add_argument("--dataset")
    s.add_argument("--blur-min", type=float, default=1.0)
    s.add_argument("--blur-max", type=float, default=4.0)
    s.set_defaults(func=cmd_blur_bench)

    s = sub.add_parser("absorb", help="fold a SAC model into plain 3x3 kernels")
    s.add_argument("--model-in", required=True)
    s.add_argument("--model-out", required=True)
    s.set_defaults(func=cmd_absorb)

    oracle = sub.add_parser("oracle", help="scale-space oracles").add_subparsers(dest="oracle", required=True)
    s = oracle.add_parser("scale-peak", help="empirical vs analytic normalized-derivative peak")
    s.add_argument("--omega", type=float, required=True)
    s.add_argument("--order", type=int, required=True)
    s.add_argument("--gamma", type=float, default=1.0)
    s.add_argument("--t-min", type=float, required=True)
    s.add_argument("--t-max", type=float, required=True)
    s.add_argument("--t-step", type=float, required=True)
    s.add_argument("--resolution", type=float, help="spatial sampling step (default period/64)")
    s.add_argument("--out", help="CSV path (default stdout)")
    s.set_defaults(func=cmd_scale_peak)

    an = sub.add_parser("analyze", help="learnt-scale diagnostics").add_subparsers(dest="analysis", required=True)
    s = an.add_parser("hist")
    s.add_argument("--model", required=True)
    s.add_argument("--out")
    s.add_argument("--bin-width", type=float, default=0.1)
    s.set_defaults(func=cmd_hist)
    s = an.add_parser("filters")
    s.add_argument("--model", required=True)
    s.add_argument("--layer", type=int, required=True)
    s.add_argument("--out")
    s.add_argument("--epsilon", type=float)
    s.set_defaults(func=cmd_filters)
    s = an.add_parser("truncation")
    s.add_argument("--model", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_truncation)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (FormatError, DomainError, ShapeError, OSError) as exc:
        print(f"scan: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
