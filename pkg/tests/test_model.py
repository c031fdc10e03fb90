"""Tests for the MLP velocity field, backprop, AdamW, and checkpoints.

The analytic parameter gradients are checked against central finite
differences of the full joint objective, and the AdamW update against a
step-by-step recomputation of the published recursion.
"""

import numpy as np
import pytest

from flowmark.codec import MultiplexScheme, derive_key
from flowmark.detector import sample_queries
from flowmark.errors import DimensionError, FormatError
from flowmark.flow import CLEAN, LossConfig
from flowmark.model import (
    AdamW,
    MlpVelocityField,
    TrainConfig,
    _sigmoid,
    backward,
    load_checkpoint,
    save_checkpoint,
    silu,
    silu_prime,
    train,
)
from flowmark.rng import SeededRng

KEY = derive_key(11, 8, 4, 2)
CFG = LossConfig(epsilon0=0.2, lam=0.02)


class TestActivations:
    def test_silu_known_values(self):
        assert silu(0.0) == 0.0
        assert abs(silu(1.0) - 1.0 / (1.0 + np.exp(-1.0))) < 1e-15
        # large positive is identity-like, large negative decays to zero
        assert abs(silu(50.0) - 50.0) < 1e-12
        assert abs(silu(-50.0)) < 1e-12

    def test_silu_prime_finite_differences(self):
        z = np.linspace(-6, 6, 101)
        h = 1e-6
        num = (silu(z + h) - silu(z - h)) / (2 * h)
        np.testing.assert_allclose(silu_prime(z), num, atol=1e-9)

    def test_no_overflow_far_negative(self):
        z = np.array([-1e6, -750.0, 750.0])
        with np.errstate(over="raise"):
            out = silu(z)
            _sigmoid(z)
        assert np.all(np.isfinite(out))


class TestMlpForward:
    def net(self, seed=0, widths=(9, 6, 6, 8)):
        return MlpVelocityField(list(widths), rng=SeededRng(seed))

    def test_reference_forward(self):
        """Forward pass against an inline matrix-by-matrix recomputation."""
        net = self.net()
        rng = SeededRng(1)
        x = rng.normal((5, 8))
        t = rng.uniform(5)
        h = np.concatenate([x, t[:, None]], axis=1)
        for i in range(net.n_layers):
            h = h @ net.W[i].T + net.b[i]
            if i < net.n_layers - 1:
                h = h * (1.0 / (1.0 + np.exp(-h)))
        np.testing.assert_allclose(net.forward(x, t), h, atol=1e-12)

    def test_single_point_shape(self):
        net = self.net()
        out = net(np.zeros(8), 0.5)
        assert out.shape == (8,)
        batch = net(np.zeros((3, 8)), 0.5)
        assert batch.shape == (3, 8)
        np.testing.assert_allclose(batch[0], out)

    def test_input_validation(self):
        net = self.net()
        with pytest.raises(DimensionError):
            net(np.zeros(7), 0.5)
        with pytest.raises(DimensionError):
            MlpVelocityField([8, 4, 8])  # input must be output + 1
        with pytest.raises(ValueError):
            MlpVelocityField([9])

    def test_init_bounds_and_determinism(self):
        a = self.net(seed=3)
        b = self.net(seed=3)
        for Wa, Wb in zip(a.W, b.W):
            assert np.array_equal(Wa, Wb)
        for W, fan_in in zip(a.W, a.widths[:-1]):
            assert np.max(np.abs(W)) <= 1.0 / np.sqrt(fan_in)
        assert all(np.all(bv == 0.0) for bv in a.b)

    def test_zero_init_without_rng(self):
        net = MlpVelocityField([9, 4, 8])
        assert np.all(net(np.ones(8), 0.3) == 0.0)


def flatten(params):
    return np.concatenate([p.ravel() for p in params])


class TestBackward:
    def make_batch(self, seed, B=6, D=8):
        rng = SeededRng(seed)
        return rng.normal((B, D)), rng.normal((B, D)), rng.uniform(B)

    def loss_at(self, net, x0, x1, t, m=1, cfg=CFG, **kw):
        return backward(net, x0, x1, t, KEY, m, cfg, **kw)[0]

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_gradients_match_finite_differences(self, seed):
        net = MlpVelocityField([9, 5, 5, 8], rng=SeededRng(seed + 20))
        x0, x1, t = self.make_batch(seed)
        _, grads, _, _ = backward(net, x0, x1, t, KEY, 1, CFG)
        h = 1e-6
        for p, g in zip(net.parameters(), grads):
            flat = p.ravel()
            for idx in range(0, flat.size, max(1, flat.size // 7)):
                keep = flat[idx]
                flat[idx] = keep + h
                up = self.loss_at(net, x0, x1, t)
                flat[idx] = keep - h
                dn = self.loss_at(net, x0, x1, t)
                flat[idx] = keep
                num = (up - dn) / (2 * h)
                assert abs(g.ravel()[idx] - num) <= 1e-5 * max(
                    1.0, abs(num)), (p.shape, idx)

    def test_multiplex_gradients(self):
        sch = MultiplexScheme("tdm", 2, 1)
        net = MlpVelocityField([9, 5, 8], rng=SeededRng(33))
        x0, x1, t = self.make_batch(4)
        _, grads, _, _ = backward(net, x0, x1, t, KEY, None, CFG,
                                  scheme=sch, submessages=[1, 0])
        h = 1e-6
        W0 = net.W[0].ravel()
        for idx in (0, 11, 27):
            keep = W0[idx]
            W0[idx] = keep + h
            up = backward(net, x0, x1, t, KEY, None, CFG, scheme=sch,
                          submessages=[1, 0])[0]
            W0[idx] = keep - h
            dn = backward(net, x0, x1, t, KEY, None, CFG, scheme=sch,
                          submessages=[1, 0])[0]
            W0[idx] = keep
            assert abs(grads[0].ravel()[idx] - (up - dn) / (2 * h)) < 1e-6

    def test_clean_paths_agree(self):
        """key=None, m=None, and CLEAN config all give the plain loss."""
        net = MlpVelocityField([9, 5, 8], rng=SeededRng(8))
        x0, x1, t = self.make_batch(5)
        base = backward(net, x0, x1, t, None, None, CLEAN)
        for args in ((KEY, None, CLEAN), (None, None, CFG),
                     (KEY, 2, CLEAN)):
            other = backward(net, x0, x1, t, *args)
            assert other[0] == base[0]
            for ga, gb in zip(base[1], other[1]):
                assert np.array_equal(ga, gb)

    def test_velocity_loss_component(self):
        net = MlpVelocityField([9, 5, 8], rng=SeededRng(9))
        x0, x1, t = self.make_batch(6)
        loss, _, vel, corr = backward(net, x0, x1, t, KEY, 0, CFG)
        assert abs(loss - (vel - 0.02 * corr)) < 1e-12


class TestAdamW:
    def test_single_parameter_recursion(self):
        """Two steps recomputed by hand for a scalar parameter."""
        p = np.array([1.0])
        opt = AdamW([p], lr=0.1, betas=(0.9, 0.999), eps=1e-8,
                    weight_decay=0.0)
        g1, g2 = np.array([0.5]), np.array([-0.25])
        m = v = 0.0
        x = 1.0
        for t, g in ((1, 0.5), (2, -0.25)):
            m = 0.9 * m + 0.1 * g
            v = 0.999 * v + 0.001 * g * g
            x -= 0.1 * (m / (1 - 0.9 ** t)) / (
                np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
        opt.step([g1])
        opt.step([g2])
        assert abs(p[0] - x) < 1e-14

    def test_decoupled_decay(self):
        """With zero gradient, AdamW shrinks the parameter by lr * wd."""
        p = np.array([2.0])
        opt = AdamW([p], lr=0.5, weight_decay=0.1)
        opt.step([np.zeros(1)])
        assert abs(p[0] - 2.0 * (1.0 - 0.5 * 0.1)) < 1e-14

    def test_updates_in_place(self):
        net = MlpVelocityField([9, 4, 8], rng=SeededRng(2))
        params = net.parameters()
        opt = AdamW(params, lr=1e-2)
        before = [p.copy() for p in params]
        opt.step([np.ones_like(p) for p in params])
        for b, p, q in zip(before, params, net.parameters()):
            assert p is q
            assert not np.array_equal(b, p)


class TestTrain:
    DATA = SeededRng(0).normal((300, 8))

    def test_deterministic(self):
        cfg = TrainConfig(steps=30, batch=16, seed=5, width=16, depth=3)
        a = train(self.DATA, KEY, 1, cfg)
        b = train(self.DATA, KEY, 1, cfg)
        for Wa, Wb in zip(a.model.W, b.model.W):
            assert np.array_equal(Wa, Wb)
        assert np.array_equal(a.telemetry["loss"], b.telemetry["loss"])

    def test_telemetry_structure(self):
        cfg = TrainConfig(steps=25, batch=16, width=16, depth=2)
        res = train(self.DATA, KEY, 0, cfg)
        tel = res.telemetry
        assert set(tel) == {"step", "loss", "vel_loss", "wm_corr"}
        assert all(len(tel[k]) == 25 for k in tel)
        assert np.all(np.isfinite(tel["loss"]))

    def test_loss_decreases(self):
        """Structured data with a large offset gives an unambiguous descent
        from the zero-field start."""
        data = SeededRng(3).normal((300, 8)) + 5.0
        cfg = TrainConfig(steps=300, batch=32, width=32, depth=3, seed=1)
        res = train(data, None, None, cfg)
        tel = res.telemetry["vel_loss"]
        assert np.mean(tel[-50:]) < 0.5 * np.mean(tel[:10])

    def test_clean_has_zero_wm_corr(self):
        cfg = TrainConfig(steps=10, batch=8, width=8, depth=2)
        res = train(self.DATA, None, None, cfg)
        assert np.all(res.telemetry["wm_corr"] == 0.0)

    def test_clean_model_scores_within_null_band(self):
        """A clean model shows no codeword above 5 SE of the demodulator.

        Holds on the detector's own query distribution, so train on
        data at the matching scale; models trained far off that scale
        extrapolate structure into the band.
        """
        data = 2.0 * SeededRng(3).normal((300, 8))
        cfg = TrainConfig(steps=400, batch=64, width=16, depth=2, seed=5)
        res = train(data, None, None, cfg)
        q = sample_queries(SeededRng(99), 4096, 8)
        v = res.model.forward(q.x, q.t)
        z = np.sin(2 * np.pi * q.t)[:, None] * (v @ KEY.projection)
        for m in range(KEY.n_messages):
            sc = z @ KEY.codeword(m)
            se = sc.std(ddof=1) / np.sqrt(len(sc))
            assert abs(sc.mean()) < 5.0 * se

    def test_marked_needs_key(self):
        with pytest.raises(ValueError):
            train(self.DATA, None, 3, TrainConfig(steps=1, batch=4))

    def test_message_validated(self):
        with pytest.raises(ValueError):
            train(self.DATA, KEY, 4, TrainConfig(steps=1, batch=4))

    def test_dataset_validated(self):
        with pytest.raises(ValueError):
            train(np.zeros((0, 4)), None, None, TrainConfig(steps=1))
        with pytest.raises(ValueError):
            train(np.zeros(7), None, None, TrainConfig(steps=1))

    def test_config_digest_distinguishes(self):
        a = TrainConfig(steps=10).digest()
        b = TrainConfig(steps=11).digest()
        assert a != b and len(a) == 16
        assert TrainConfig(steps=10).digest() == a


class TestCheckpoint:
    def test_round_trip_exact(self, tmp_path):
        net = MlpVelocityField([9, 6, 8], rng=SeededRng(4))
        path = tmp_path / "m.ckpt"
        save_checkpoint(net, path, config_digest="abc123")
        loaded, header = load_checkpoint(path)
        assert header["config_digest"] == "abc123"
        assert loaded.widths == net.widths
        for a, b in zip(net.parameters(), loaded.parameters()):
            assert np.array_equal(a, b)
        x = SeededRng(5).normal((3, 8))
        assert np.array_equal(net(x, 0.3), loaded(x, 0.3))

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "m.ckpt"
        path.write_bytes(b"NOT-A-CKPT\n{}\n")
        with pytest.raises(FormatError):
            load_checkpoint(path)

    def test_truncated_payload(self, tmp_path):
        net = MlpVelocityField([9, 6, 8], rng=SeededRng(4))
        path = tmp_path / "m.ckpt"
        save_checkpoint(net, path)
        blob = path.read_bytes()
        path.write_bytes(blob[:-16])
        with pytest.raises(FormatError):
            load_checkpoint(path)

    def test_corrupt_header(self, tmp_path):
        path = tmp_path / "m.ckpt"
        path.write_bytes(b"FLOWMARK-CKPT v1\nnot json\n")
        with pytest.raises(FormatError):
            load_checkpoint(path)

    def test_missing_widths(self, tmp_path):
        path = tmp_path / "m.ckpt"
        path.write_bytes(b'FLOWMARK-CKPT v1\n{"activation": "silu"}\n')
        with pytest.raises(FormatError):
            load_checkpoint(path)
