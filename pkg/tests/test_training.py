import struct

import numpy as np
import pytest

from orn.data import LabeledImageSet
from orn.network import LayerSpec, NetworkSpec, build_network, orn_spec
from orn.training import (
    Checkpoint,
    EpochMetrics,
    TrainConfig,
    TrainingDiverged,
    decode_checkpoint,
    encode_checkpoint,
    evaluate,
    load_checkpoint,
    save_checkpoint,
    train,
    write_metrics_csv,
)


def _small_spec():
    return NetworkSpec("small-orn", [
        LayerSpec("extend", n=4), LayerSpec("orconv", out=2, n=4), LayerSpec("relu"), LayerSpec("maxpool"),
        LayerSpec("orconv", out=3, n=4), LayerSpec("relu"), LayerSpec("gpool"), LayerSpec("oralign"),
        LayerSpec("fc", out=16), LayerSpec("relu"), LayerSpec("dropout", rate=0.5), LayerSpec("fc", out=10),
        LayerSpec("softmax")], (1, 12, 12), 4, "oralign")


def _data(n=64, seed=0):
    r = np.random.default_rng(seed)
    return LabeledImageSet(r.random((n, 12, 12)).astype(np.float32), r.integers(0, 10, n))


class TestConfig:
    @pytest.mark.parametrize("kw", [{"batch_size": 0}, {"dropout": 1.0}, {"dropout": -0.1}, {"precision": "half"}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            TrainConfig(**kw)

    def test_defaults_follow_protocol(self):
        cfg = TrainConfig()
        assert (cfg.batch_size, cfg.dropout, cfg.rho, cfg.eps) == (128, 0.5, 0.9, 1e-6)


class TestTrain:
    def test_smoke_one_epoch(self):
        net = build_network(_small_spec())
        res = train(net, _data(), TrainConfig(epochs=1, batch_size=16, validation_size=0))
        assert len(res.metrics) == 1 and np.isfinite(res.metrics[0].train_loss)

    def test_deterministic(self):
        runs = []
        for _ in range(2):
            net = build_network(_small_spec(), seed=5)
            res = train(net, _data(80), TrainConfig(epochs=2, batch_size=16, validation_size=16, seed=3))
            runs.append(([(m.train_loss, m.train_err, m.val_loss, m.val_err) for m in res.metrics], net.state_dict()))
        assert runs[0][0] == runs[1][0]
        for k in runs[0][1]:
            np.testing.assert_array_equal(runs[0][1][k], runs[1][1][k])

    def test_learning_reduces_loss(self):
        net = build_network(_small_spec(), seed=0)
        data = _data(32)
        res = train(net, data, TrainConfig(epochs=40, batch_size=32, dropout=0.0, validation_size=0))
        assert res.metrics[-1].train_loss < res.metrics[0].train_loss

    def test_resume_matches_uninterrupted(self):
        cfg = TrainConfig(epochs=3, batch_size=16, validation_size=16, seed=2)
        full_net = build_network(_small_spec(), seed=1)
        full = train(full_net, _data(80), cfg)
        half_net = build_network(_small_spec(), seed=1)
        first = train(half_net, _data(80), TrainConfig(epochs=1, batch_size=16, validation_size=16, seed=2))
        ckpt = decode_checkpoint(encode_checkpoint(first.last))
        rest_net = build_network(_small_spec(), seed=99)
        rest = train(rest_net, _data(80), cfg, resume=ckpt)
        assert [m.epoch for m in rest.metrics] == [2, 3]
        assert rest.metrics[-1].train_loss == pytest.approx(full.metrics[-1].train_loss, rel=1e-5)
        for k, v in full_net.state_dict().items():
            np.testing.assert_allclose(rest_net.state_dict()[k], v, rtol=1e-5, atol=1e-6)

    def test_resume_rejects_other_spec(self):
        first = train(build_network(_small_spec()), _data(), TrainConfig(epochs=1, batch_size=32, validation_size=0))
        spec = _small_spec()
        spec.layers[1].out = 3
        other = build_network(spec)
        with pytest.raises(ValueError, match="different network"):
            train(other, _data(), TrainConfig(epochs=2, validation_size=0), resume=first.last)

    def test_input_shape_checked(self):
        with pytest.raises(ValueError, match="do not match"):
            train(build_network(orn_spec(4, "none")), _data(), TrainConfig(epochs=1, validation_size=0))

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_returns_last_good(self):
        net = build_network(_small_spec())
        data = _data(32)
        data.images[5, 3, 3] = np.inf
        with pytest.raises(TrainingDiverged) as e:
            train(net, data, TrainConfig(epochs=2, batch_size=32, validation_size=0))
        ckpt = e.value.checkpoint
        assert ckpt.epoch == 0
        assert all(np.all(np.isfinite(p)) for p in ckpt.params.values())

    def test_best_epoch_selection(self):
        net = build_network(_small_spec(), seed=0)
        res = train(net, _data(96), TrainConfig(epochs=4, batch_size=16, validation_size=32, seed=0))
        errs = [m.val_err for m in res.metrics]
        assert res.best_epoch == 1 + int(np.argmin(errs))
        assert res.best.epoch == res.best_epoch


class TestEvaluate:
    def test_confusion_rows_sum_to_class_counts(self):
        data = _data(100)
        ev = evaluate(build_network(_small_spec()), data, batch_size=33)
        np.testing.assert_array_equal(ev.confusion.sum(axis=1), np.bincount(data.labels, minlength=10))
        assert ev.count == 100
        assert ev.error == pytest.approx(1 - np.trace(ev.confusion) / 100)
        assert "confusion" in ev.format()

    def test_dropout_disabled(self):
        net = build_network(_small_spec())
        data = _data(20)
        assert evaluate(net, data).loss == evaluate(net, data).loss


class TestCheckpoint:
    def _ckpt(self, tmp_path):
        net = build_network(_small_spec(), seed=4)
        res = train(net, _data(48), TrainConfig(epochs=1, batch_size=16, validation_size=16))
        return net, res.last

    def test_round_trip_bit_exact(self, tmp_path):
        net, ckpt = self._ckpt(tmp_path)
        path = tmp_path / "a.ornc"
        save_checkpoint(ckpt, path)
        back = load_checkpoint(path)
        assert back.fingerprint == ckpt.fingerprint and back.epoch == ckpt.epoch
        for k, v in ckpt.params.items():
            assert back.params[k].tobytes() == v.astype("<f4").tobytes()
        for k, st in ckpt.optimizer.items():
            np.testing.assert_array_equal(back.optimizer[k].sq_grad, st.sq_grad)
            assert back.optimizer[k].step == st.step
        assert back.rng_state == ckpt.rng_state
        assert encode_checkpoint(back) == path.read_bytes()

    def test_round_trip_reproduces_evaluation(self, tmp_path):
        net, ckpt = self._ckpt(tmp_path)
        save_checkpoint(ckpt, tmp_path / "b.ornc")
        data = _data(40, seed=9)
        a = evaluate(ckpt.network(), data)
        b = evaluate(load_checkpoint(tmp_path / "b.ornc").network(), data)
        assert a.loss == b.loss and a.error == b.error
        np.testing.assert_array_equal(a.confusion, b.confusion)

    def test_layout(self, tmp_path):
        _, ckpt = self._ckpt(tmp_path)
        raw = encode_checkpoint(ckpt)
        assert raw[:4] == b"ORNC"
        assert struct.unpack_from("<H", raw, 4)[0] == 1
        count = struct.unpack_from("<I", raw, 6)[0]
        assert count == len(ckpt.params)
        nlen = struct.unpack_from("<I", raw, 10)[0]
        first = next(iter(ckpt.params))
        assert raw[14:14 + nlen].decode() == first
        rank = struct.unpack_from("<I", raw, 14 + nlen)[0]
        assert struct.unpack_from(f"<{rank}I", raw, 18 + nlen) == ckpt.params[first].shape

    def test_bad_magic(self):
        with pytest.raises(ValueError, match="magic"):
            decode_checkpoint(b"XXXX\x01\x00")

    def test_truncated(self, tmp_path):
        _, ckpt = self._ckpt(tmp_path)
        raw = encode_checkpoint(ckpt)
        with pytest.raises(ValueError, match="truncated"):
            decode_checkpoint(raw[:200])

    def test_fingerprint_mismatch(self, tmp_path):
        _, ckpt = self._ckpt(tmp_path)
        raw = encode_checkpoint(ckpt).replace(ckpt.fingerprint.encode(), b"0" * 16)
        with pytest.raises(ValueError, match="fingerprint"):
            decode_checkpoint(raw)


def test_metrics_csv(tmp_path):
    rows = [EpochMetrics(1, 2.0, 0.5, 1.9, 0.4, 3.2), EpochMetrics(2, 1.5, 0.3, 1.4, 0.25, 3.1)]
    path = tmp_path / "m.csv"
    write_metrics_csv(rows[:1], path)
    write_metrics_csv(rows[1:], path, append=True)
    lines = path.read_text().splitlines()
    assert lines[0] == "epoch,train_loss,train_err,val_loss,val_err,wall_seconds"
    assert [l.split(",")[0] for l in lines[1:]] == ["1", "2"]


def test_checkpoint_dataclass_network():
    net = build_network(_small_spec(), seed=7)
    ck = Checkpoint(net.spec, net.state_dict(), {})
    rebuilt = ck.network()
    for k, v in net.state_dict().items():
        np.testing.assert_array_equal(rebuilt.state_dict()[k], v)
