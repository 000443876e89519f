import hashlib
import math
import struct
import zlib
from dataclasses import replace

import numpy as np
import pytest

from conftest import CONFIG_DIR, pinned_config, trained
from scan.config import load_config, parse_config, parse_dataset_arg, parse_pairs
from scan.data import (DatasetSpec, blur_split, high_band_energy, read_idx, synth_dataset, synth_levels,
                       write_idx)
from scan.errors import DomainError, FormatError
from scan.network import SacNetwork
from scan.sac import sac_forward
from scan.serialize import from_bytes, load_model, save_model, to_bytes
from scan.tensor import finite_difference_gradcheck, softmax_cross_entropy
from scan.training import (RmoConfig, SgdMomentum, TrainConfig, compute_gradients, evaluate,
                           rmo_loss, rmo_loss_and_grad, scale_term_only_gradients, total_loss, train)


def small_net(seed=3, widths=(2, 2), classes=3, lsc=True):
    net = SacNetwork.init(1, list(widths), classes, seed=seed, lsc=lsc)
    rng = np.random.default_rng(seed + 100)
    for layer in net.layers:
        layer.theta = rng.uniform(-0.5, 0.5, layer.out_channels)
    return net


def load_params(net, values):
    for name, arr in net.params().items():
        arr[...] = values[name]


class TestRmoLoss:
    def test_zero_response(self):
        loss, grad = rmo_loss_and_grad(np.zeros((2, 3, 4, 4)))
        assert loss == 1.0
        assert not grad.any()

    def test_unit_norm_per_pixel(self):
        f = np.zeros((1, 1, 2, 2))
        f[0, 0, 0, 0] = 4.0
        assert rmo_loss(f) == pytest.approx(math.exp(-1.0), rel=1e-15)
        assert rmo_loss(f, lam=2.0) == pytest.approx(math.exp(-2.0), rel=1e-15)

    def test_batch_mean_of_norms(self):
        f = np.zeros((2, 1, 1, 1))
        f[0, 0, 0, 0], f[1, 0, 0, 0] = 3.0, -1.0
        assert rmo_loss(f) == pytest.approx(math.exp(-2.0))

    def test_monotone_in_response(self):
        f = np.random.default_rng(0).normal(size=(2, 2, 5, 5))
        losses = [rmo_loss(s * f) for s in (0.5, 1.0, 2.0, 4.0)]
        assert all(a > b for a, b in zip(losses, losses[1:]))

    def test_gradcheck(self):
        f0 = np.random.default_rng(1).normal(size=(3, 2, 4, 5))

        def loss(p):
            value, grad = rmo_loss_and_grad(p["f"], lam=7.0)
            return value, {"f": grad}

        report = finite_difference_gradcheck(loss, {"f": f0})
        assert report.passed, str(report)

    def test_negative_lambda(self):
        with pytest.raises(DomainError):
            RmoConfig(lam=-1.0)


class TestTotalLoss:
    def test_sum(self):
        b = total_loss(0.5, [0.25, 0.125], RmoConfig())
        assert b.total == pytest.approx(0.875)

    def test_mean(self):
        b = total_loss(0.5, [0.25, 0.125], RmoConfig(aggregation="mean"))
        assert b.total == pytest.approx(0.6875)

    def test_disabled(self):
        b = total_loss(0.5, [0.25], RmoConfig(enabled=False))
        assert b.total == 0.5 and b.scale_per_layer == [0.25]


class TestGradients:
    def batch(self, n=3, size=8, classes=3, seed=4):
        rng = np.random.default_rng(seed)
        return rng.normal(size=(n, 1, size, size)), rng.integers(0, classes, n)

    def test_recognition_only_gradcheck(self):
        net = small_net()
        x, y = self.batch()

        def loss(p):
            load_params(net, p)
            b, g = compute_gradients(net, x, y, RmoConfig(enabled=False))
            return b.total, g

        report = finite_difference_gradcheck(loss, {k: v.copy() for k, v in net.params().items()})
        assert report.passed, str(report)

    @pytest.mark.parametrize("aggregation", ["sum", "mean"])
    def test_composite_with_cutoff_gradcheck(self, aggregation):
        """Analytic gradient equals the numeric gradient of a loss whose scale terms see frozen inputs."""
        net = small_net()
        x, y = self.batch()
        rmo = RmoConfig(lam=5.0, aggregation=aggregation)
        base = {k: v.copy() for k, v in net.params().items()}
        load_params(net, base)
        net.forward(x)
        frozen = [h.copy() for h in net._caches["inputs"]]
        weight = 1.0 if aggregation == "sum" else 1.0 / net.depth

        def reference(p):
            load_params(net, p)
            rec, _ = softmax_cross_entropy(net.forward(x), y)
            scale = 0.0
            for layer, h in zip(net.layers, frozen):
                sac_forward(h, layer)
                scale += rmo_loss(layer.last_pre, rmo.lam)
            load_params(net, base)
            _, grads = compute_gradients(net, x, y, rmo)
            return rec + weight * scale, grads

        report = finite_difference_gradcheck(reference, base)
        assert report.passed, str(report)

    def test_first_layer_sees_recognition_plus_its_own_scale_term(self):
        net = small_net()
        x, y = self.batch()
        g_cut = compute_gradients(net, x, y, RmoConfig(lam=5.0))[1]["0.k"]
        g_rec = compute_gradients(net, x, y, RmoConfig(enabled=False))[1]["0.k"]
        g_own = scale_term_only_gradients(net, x, 0, lam=5.0)["0.k"]
        np.testing.assert_allclose(g_cut, g_rec + g_own, atol=1e-12)

    def test_scale_term_reaches_only_its_layer(self):
        net = small_net(widths=(2, 3, 2))
        x, _ = self.batch()
        for layer_index in range(3):
            grads = scale_term_only_gradients(net, x, layer_index)
            for name, g in grads.items():
                owner = name.split(".")[0]
                if owner != str(layer_index):
                    assert not g.any(), name
            assert grads[f"{layer_index}.k"].any()

    def test_zero_head_leaves_only_own_scale_terms(self):
        net = small_net()
        net.head_w[:] = 0
        x, y = self.batch()
        _, grads = compute_gradients(net, x, y, RmoConfig(lam=3.0))
        for i in range(net.depth):
            own = scale_term_only_gradients(net, x, i, lam=3.0)
            for name in ("k", "k_i", "theta"):
                np.testing.assert_array_equal(grads[f"{i}.{name}"], own[f"{i}.{name}"])

    def test_plain_network_gradcheck(self):
        net = SacNetwork.init(1, [2, 2], 3, seed=1, form="absorbed")
        x, y = self.batch()

        def loss(p):
            load_params(net, p)
            b, g = compute_gradients(net, x, y, RmoConfig())
            return b.total, g

        report = finite_difference_gradcheck(loss, {k: v.copy() for k, v in net.params().items()})
        assert report.passed, str(report)


class TestSgd:
    def test_momentum_update(self):
        p = {"0.k": np.array([1.0])}
        opt = SgdMomentum(lr=0.1, momentum=0.9, weight_decay=0.0)
        opt.step(p, {"0.k": np.array([1.0])})
        assert p["0.k"][0] == pytest.approx(0.9)
        opt.step(p, {"0.k": np.array([1.0])})
        assert p["0.k"][0] == pytest.approx(0.9 - 0.19)

    def test_weight_decay_skips_scales_and_bias(self):
        p = {"0.theta": np.array([2.0]), "head.b": np.array([2.0]), "0.k": np.array([2.0])}
        opt = SgdMomentum(lr=1.0, momentum=0.0, weight_decay=0.5)
        opt.step(p, {k: np.zeros(1) for k in p})
        assert p["0.theta"][0] == 2.0 and p["head.b"][0] == 2.0
        assert p["0.k"][0] == pytest.approx(1.0)


class TestTraining:
    def test_response_maximization_alone_raises_response(self):
        net = SacNetwork.init(1, [2], 2, seed=0)
        x = synth_dataset(DatasetSpec(train_samples=16, test_samples=0, seed=2)).train_x
        opt = SgdMomentum(lr=0.01, momentum=0.9, weight_decay=0.0)
        norms, losses = [], []
        for _ in range(200):
            grads = scale_term_only_gradients(net, x, 0)
            pre = net._caches["pres"][0]
            norms.append(float(np.sqrt((pre ** 2).sum(axis=(1, 2, 3))).mean()))
            losses.append(rmo_loss(pre))
            opt.step(net.params(), grads)
        assert all(b > a for a, b in zip(norms[-20:], norms[-19:]))
        assert losses[-1] < losses[0]

    def test_deterministic(self):
        cfg = TrainConfig(seed=3, widths=(2, 2), epochs=2, dataset=DatasetSpec(train_samples=96,
                                                                                 test_samples=8))
        a, hist_a = train(cfg)
        b, hist_b = train(cfg)
        assert to_bytes(a) == to_bytes(b)
        assert [h.loss.total for h in hist_a] == [h.loss.total for h in hist_b]

    def test_lr_drop_schedule(self):
        cfg = TrainConfig(seed=3, widths=(2,), epochs=4, lr=0.04,
                          dataset=DatasetSpec(train_samples=64, test_samples=8))
        _, hist = train(cfg)
        assert [h.lr for h in hist] == pytest.approx([0.04, 0.04, 0.004, 0.004])

    @pytest.mark.slow
    def test_pinned_config_learns(self):
        _, hist, _ = trained(pinned_config("degeneration-lsc"))
        assert hist[-1].train_accuracy > 0.9

    @pytest.mark.slow
    @pytest.mark.parametrize("name", sorted(p.stem for p in CONFIG_DIR.glob("*.cfg")))
    def test_shipped_config_loss_falls(self, name):
        _, hist, _ = trained(pinned_config(name))
        assert hist[-1].loss.total < hist[0].loss.total


class TestEvaluate:
    def test_constant_predictor_is_chance(self):
        net = SacNetwork.init(1, [2], 4, seed=0)
        net.head_w[:] = 0
        net.head_b[:] = [1.0, 0, 0, 0]
        data = synth_dataset(DatasetSpec(train_samples=0, test_samples=64))
        res = evaluate(net, data.test_x, data.test_y)
        assert res.accuracy == 0.25
        assert res.per_class == {0: 1.0, 1: 0.0, 2: 0.0, 3: 0.0}

    def test_self_labels(self):
        net = SacNetwork.init(1, [3], 4, seed=0)
        x = synth_dataset(DatasetSpec(train_samples=0, test_samples=40)).test_x
        assert evaluate(net, x, net.predict(x)).accuracy == 1.0

    def test_absorbed_agrees(self):
        cfg = TrainConfig(seed=5, widths=(4, 4), epochs=2,
                          dataset=DatasetSpec(train_samples=256, test_samples=256, seed=5))
        net, _ = train(cfg)
        data = synth_dataset(cfg.dataset)
        a = evaluate(net, data.test_x, data.test_y).accuracy
        b = evaluate(net.absorbed(), data.test_x, data.test_y).accuracy
        assert abs(a - b) <= 0.001


class TestDataset:
    def test_deterministic_and_seeded(self):
        spec = DatasetSpec(train_samples=50, test_samples=20, seed=9)
        digest = lambda s: hashlib.sha256(b"".join(a.tobytes() for a in synth_levels(s))).hexdigest()
        assert digest(spec) == digest(spec)
        assert digest(spec) != digest(replace(spec, seed=10))

    def test_balanced_labels(self):
        _, y, _, _ = synth_levels(DatasetSpec(train_samples=40, test_samples=0, classes=4))
        assert np.bincount(y).tolist() == [10, 10, 10, 10]

    def test_zero_blur_is_identity(self):
        data = synth_dataset(DatasetSpec(train_samples=0, test_samples=30, blur=(0.0, 0.0)))
        np.testing.assert_array_equal(data.blur_x, data.test_x)

    def test_blur_removes_high_frequencies(self):
        spec = DatasetSpec(train_samples=0, test_samples=64)
        x = synth_dataset(spec).test_x
        energies = [high_band_energy(blur_split(x, replace(spec, blur=(t, t)))[0], border=4)
                    for t in (0.5, 1.0, 2.0, 4.0)]
        assert high_band_energy(x, border=4) > energies[0]
        assert all(a > b for a, b in zip(energies, energies[1:]))

    @pytest.mark.parametrize("kwargs", [dict(classes=1), dict(classes=9), dict(size=4),
                                        dict(blur=(3.0, 1.0)), dict(inner_scale=(0.0, 1.0)),
                                        dict(kind="cifar"), dict(noise=-1.0)])
    def test_invalid_specs(self, kwargs):
        with pytest.raises(DomainError):
            DatasetSpec(**kwargs)

    def test_idx_round_trip(self, tmp_path):
        arr = np.arange(24, dtype=np.uint8).reshape(2, 3, 4)
        write_idx(tmp_path / "a.idx", arr)
        np.testing.assert_array_equal(read_idx(tmp_path / "a.idx"), arr)


class TestSerialization:
    def net32(self, form="sac", lsc=True):
        net = SacNetwork.init(1, [3, 2], 4, seed=8, lsc=lsc, form=form).astype(np.float32)
        for layer in net.layers:
            layer.theta[:] = np.float32(0.37)
        return net

    @pytest.mark.parametrize("form", ["sac", "absorbed"])
    def test_round_trip(self, tmp_path, form):
        net = self.net32(form)
        save_model(net, tmp_path / "m.bin")
        back = load_model(tmp_path / "m.bin")
        assert back.form == form
        for name, arr in net.params().items():
            np.testing.assert_array_equal(back.params()[name], arr)
        assert to_bytes(back) == to_bytes(net)

    def test_absorbed_file_holds_fused_kernels(self):
        net = self.net32()
        back = from_bytes(to_bytes(net.absorbed()))
        for a, b in zip(back.kernels, net.absorbed().kernels):
            np.testing.assert_array_equal(a, b)

    def test_flags_round_trip(self):
        net = self.net32(lsc=False)
        net.layers[1].activation = False
        back = from_bytes(to_bytes(net))
        assert [l.lsc for l in back.layers] == [False, False]
        assert [l.activation for l in back.layers] == [True, False]

    def test_bad_magic(self):
        data = bytearray(to_bytes(self.net32()))
        data[0:4] = b"NOPE"
        with pytest.raises(FormatError, match="magic"):
            from_bytes(bytes(data))

    def test_version(self):
        data = bytearray(to_bytes(self.net32()))
        data[4] = 2
        with pytest.raises(FormatError, match="version"):
            from_bytes(bytes(data))

    def test_truncated(self):
        data = to_bytes(self.net32())
        for cut in (3, 9, 20, len(data) - 5):
            with pytest.raises(FormatError):
                from_bytes(data[:cut])

    def test_checksum(self):
        data = bytearray(to_bytes(self.net32()))
        data[30] ^= 0x01
        with pytest.raises(FormatError, match="checksum"):
            from_bytes(bytes(data))

    def test_unknown_form(self):
        data = bytearray(to_bytes(self.net32()))
        data[5] = 7
        payload = bytes(data[:-4])
        with pytest.raises(FormatError, match="form"):
            from_bytes(payload + struct.pack("<I", zlib.crc32(payload)))


class TestConfig:
    TEXT = """
    # pinned run
    seed=11
    widths=4,6
    epochs=3
    lambda=0.5
    rmo.aggregation=mean
    lsc.enabled=false
    dataset.blur=1,4
    dataset.train_samples=128
    """

    def test_parse(self):
        cfg = parse_config(self.TEXT)
        assert cfg.seed == 11 and cfg.widths == (4, 6) and cfg.epochs == 3
        assert cfg.rmo == RmoConfig(lam=0.5, aggregation="mean")
        assert cfg.lsc is False
        assert cfg.dataset.blur == (1.0, 4.0) and cfg.dataset.train_samples == 128

    def test_defaults(self):
        assert parse_config("") == TrainConfig()

    def test_unknown_key(self):
        with pytest.raises(FormatError, match="unknown"):
            parse_config("seed=1\nlearning_rate=0.1")

    def test_duplicate_and_malformed(self):
        with pytest.raises(FormatError, match="duplicate"):
            parse_pairs("seed=1\nseed=2")
        with pytest.raises(FormatError, match="key=value"):
            parse_pairs("seed 1")
        with pytest.raises(FormatError, match="epochs"):
            parse_config("epochs=three")
        with pytest.raises(FormatError):
            parse_config("dtype=float16")
        with pytest.raises(FormatError):
            parse_config("dataset.classes=1")

    def test_digest_tracks_text(self, tmp_path):
        (tmp_path / "a.cfg").write_text("seed=1\n")
        (tmp_path / "b.cfg").write_text("seed=1\n# same run\n")
        (cfg_a, dig_a), (cfg_b, dig_b) = load_config(tmp_path / "a.cfg"), load_config(tmp_path / "b.cfg")
        assert cfg_a == cfg_b and dig_a != dig_b and len(dig_a) == 16

    def test_inline_dataset(self):
        spec = parse_dataset_arg("test_samples=32,blur=1:4,dataset.seed=3")
        assert spec.test_samples == 32 and spec.blur == (1.0, 4.0) and spec.seed == 3
