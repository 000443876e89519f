"""
Training with and without the shortcut
======================================

Train three small two-layer networks on the synthetic pattern set and look
at where the learnt scales end up. Without the shortcut kernel some scales
can collapse toward zero. Without the response-maximization term the
scales barely move from their starting value of 1.

Takes about a minute on one core.
"""
from dataclasses import replace

import numpy as np

from scan.analysis import histogram_of
from scan.data import DatasetSpec, synth_dataset
from scan.training import RmoConfig, TrainConfig, evaluate, train

data_spec = DatasetSpec(train_samples=4096, test_samples=512, seed=7)
data = synth_dataset(data_spec)
base = TrainConfig(seed=7, widths=(8, 8), epochs=5, lr=0.05, dataset=data_spec)

runs = {
    "shortcut + rmo": base,
    "no shortcut": replace(base, lsc=False),
    "no rmo": replace(base, rmo=RmoConfig(enabled=False)),
}

for name, cfg in runs.items():
    net, history = train(cfg, data)
    t = np.concatenate(net.scales())
    acc = evaluate(net, data.test_x, data.test_y).accuracy
    hist = histogram_of(t, 0.1)
    print(f"\n{name}: test accuracy {acc:.3f}")
    print(f"  loss per epoch: {[round(h.loss.total, 4) for h in history]}")
    print(f"  t < 0.1 for {np.mean(t < 0.1):.1%} of filters, histogram mode {hist.mode:.2f}")
    print(f"  sorted t: {np.round(np.sort(t), 3)}")
