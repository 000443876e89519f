"""
Blur robustness against a plain conv net
========================================

Train a SAC network and a plain 3x3 conv network of the same widths on
clean images, then test both on images blurred at t_blur drawn from [1, 4].
Both networks cost the same at inference time.

This script uses one seed and a small training set so it finishes quickly.
The acceptance suite runs the three-seed version.
"""
from scan.data import DatasetSpec, high_band_energy, synth_dataset
from scan.training import TrainConfig, evaluate, train

spec = DatasetSpec(train_samples=2048, test_samples=512, blur=(1.0, 4.0), seed=1)
data = synth_dataset(spec)
print(f"high-band energy clean {high_band_energy(data.test_x):.1f}, "
      f"blurred {high_band_energy(data.blur_x):.1f}")

for name, sac in (("SAC", True), ("plain", False)):
    net, _ = train(TrainConfig(seed=1, widths=(8, 8), epochs=5, lr=0.05, sac=sac, dataset=spec), data)
    clean = evaluate(net, data.test_x, data.test_y)
    blurred = evaluate(net, data.blur_x, data.test_y)
    print(f"{name:6s} clean {clean.accuracy:.3f}  blurred {blurred.accuracy:.3f}")
    print("       per class on blurred:", {c: round(a, 2) for c, a in blurred.per_class.items()})
