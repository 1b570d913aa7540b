import json

import numpy as np
import pytest

from hstream.model import (
    ModelConfig,
    TrainConfig,
    build_model,
    load_checkpoint,
    predict,
    prepare_flow_input,
    save_checkpoint,
    train,
)
from hstream.dataset import load_manifest
from hstream.synth import SynthConfig, gen_dataset


@pytest.fixture(scope="module")
def small_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("ds")
    gen_dataset(SynthConfig(sequences_per_class=10, seed=42), root)
    return load_manifest(root)


class TestBuildModel:
    def test_fusion_input_220_with_stick_and_flow(self):
        net = build_model(ModelConfig(use_stick=True, use_flow=True, seed=0))
        assert net.fusion_net.layers[0].in_dim == 64 + 156 == 220
        probs, _ = net.forward(np.zeros((1, 156), dtype=np.float32),
                               np.zeros((1, 56, 56, 4), dtype=np.float32))
        assert probs.shape == (1, 4)
        assert probs.sum() == pytest.approx(1.0, abs=1e-6)

    def test_no_stick_no_flow_consumes_144(self):
        net = build_model(ModelConfig(use_stick=False, use_flow=False, seed=0))
        assert net.flow_net is None
        assert net.fusion_net.layers[0].in_dim == 144
        probs, _ = net.forward(np.zeros((2, 144), dtype=np.float32))
        assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-6)

    def test_ablated_model_has_no_conv_parameters(self, tmp_path):
        net = build_model(ModelConfig(use_stick=True, use_flow=False, seed=3))
        save_checkpoint(net, tmp_path / "ck.ckpt", epoch=1, val_accuracy=0.5)
        manifest = json.loads((tmp_path / "ck.ckpt" / "manifest.json").read_text())
        kinds = {spec["kind"] for spec in manifest["layers"]}
        assert "conv2d" not in kinds
        assert not list((tmp_path / "ck.ckpt").glob("layer0.weight.htsr")) or manifest["layers"][0]["kind"] == "dense"

    def test_dropout_after_second_fusion_dense(self):
        net = build_model(ModelConfig(seed=1))
        kinds = [layer.kind for layer in net.fusion_net.layers]
        assert kinds == ["dense", "sigmoid", "dense", "sigmoid", "dropout", "dense", "sigmoid", "dense", "softmax"]
        assert net.fusion_net.layers[2].out_dim == 50

    def test_rejects_bad_fusion_widths(self):
        with pytest.raises(ValueError):
            ModelConfig(fusion_widths=(100, 50, 20))
        with pytest.raises(ValueError):
            ModelConfig(fusion_widths=(100, 50, 20, 5))

    def test_same_seed_same_init(self):
        a = build_model(ModelConfig(seed=9))
        b = build_model(ModelConfig(seed=9))
        for (na, wa), (nb, wb) in zip(a.parameters(), b.parameters()):
            assert na == nb
            assert (wa == wb).all()


class TestPrepareFlowInput:
    def test_identity_at_56(self):
        rng = np.random.default_rng(0)
        f12 = rng.normal(size=(56, 56, 2)).astype(np.float32)
        f23 = rng.normal(size=(56, 56, 2)).astype(np.float32)
        out = prepare_flow_input(f12, f23)
        assert out.shape == (56, 56, 4)
        assert np.allclose(out[:, :, :2], f12, atol=1e-6)
        assert np.allclose(out[:, :, 2:], f23, atol=1e-6)

    def test_downscale_halves_displacements(self):
        f = np.zeros((112, 112, 2), dtype=np.float32)
        f[:, :, 0] = 8.0
        f[:, :, 1] = 2.0
        out = prepare_flow_input(f, f)
        assert np.allclose(out[:, :, 0], 4.0, atol=1e-6)
        assert np.allclose(out[:, :, 1], 1.0, atol=1e-6)
        assert np.allclose(out[:, :, 2], 4.0, atol=1e-6)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            prepare_flow_input(np.zeros((56, 56, 2)), np.zeros((64, 64, 2)))


class TestPredict:
    def test_probabilities_contract(self):
        net = build_model(ModelConfig(seed=2))
        rng = np.random.default_rng(1)
        latent = rng.normal(size=(156,)).astype(np.float32)
        flow = rng.normal(size=(56, 56, 4)).astype(np.float32)
        probs = predict(net, latent, flow)
        assert probs.shape == (4,)
        assert (probs > 0).all() and (probs < 1).all()
        assert probs.sum() == pytest.approx(1.0, abs=1e-6)

    def test_zeroed_final_layer_gives_uniform(self):
        net = build_model(ModelConfig(seed=2))
        final = net.fusion_net.layers[-2]
        final.weight[:] = 0.0
        final.bias[:] = 0.0
        rng = np.random.default_rng(2)
        probs = predict(net, rng.normal(size=(156,)).astype(np.float32),
                        rng.normal(size=(56, 56, 4)).astype(np.float32))
        assert np.allclose(probs, 0.25, atol=1e-7)

    def test_missing_flow_rejected(self):
        net = build_model(ModelConfig(seed=2))
        with pytest.raises(ValueError):
            predict(net, np.zeros(156, dtype=np.float32))

    def test_deterministic(self):
        net = build_model(ModelConfig(seed=2))
        rng = np.random.default_rng(3)
        latent = rng.normal(size=(156,)).astype(np.float32)
        flow = rng.normal(size=(56, 56, 4)).astype(np.float32)
        assert (predict(net, latent, flow) == predict(net, latent, flow)).all()


class TestCheckpoints:
    def test_round_trip(self, tmp_path):
        net = build_model(ModelConfig(seed=5))
        save_checkpoint(net, tmp_path / "e.ckpt", epoch=7, val_accuracy=0.625)
        loaded, manifest = load_checkpoint(tmp_path / "e.ckpt")
        assert manifest["epoch"] == 7
        assert manifest["val_accuracy"] == 0.625
        for (na, wa), (nb, wb) in zip(net.parameters(), loaded.parameters()):
            assert na == nb
            assert (wa == wb).all()

    def test_config_mismatch_rejected(self, tmp_path):
        net = build_model(ModelConfig(seed=5))
        save_checkpoint(net, tmp_path / "e.ckpt", epoch=1, val_accuracy=0.5)
        with pytest.raises(ValueError):
            load_checkpoint(tmp_path / "e.ckpt", expect_cfg=ModelConfig(seed=5, use_stick=False))

    def test_not_a_checkpoint(self, tmp_path):
        with pytest.raises(ValueError):
            load_checkpoint(tmp_path)


class TestTrain:
    def test_epochs_zero_returns_empty(self, small_dataset, tmp_path):
        kept = train(small_dataset, ModelConfig(seed=0), TrainConfig(epochs=0), tmp_path / "out")
        assert kept == []
        assert not list((tmp_path / "out").glob("*.ckpt"))

    def test_checkpoints_per_epoch_and_ranking(self, small_dataset, tmp_path):
        out = tmp_path / "out"
        kept = train(small_dataset, ModelConfig(seed=0), TrainConfig(epochs=4, keep_top=3), out, seed=0)
        assert len(kept) == 3
        assert len(list(out.glob("epoch_*.ckpt"))) == 4
        accs = [k.val_accuracy for k in kept]
        assert accs == sorted(accs, reverse=True)
        ranking = json.loads((out / "ranking.json").read_text())
        assert len(ranking["epochs"]) == 4
        assert ranking["kept"][0]["epoch"] == kept[0].epoch

    def test_tie_prefers_earlier_epoch(self, small_dataset, tmp_path):
        kept = train(small_dataset, ModelConfig(seed=0), TrainConfig(epochs=3, keep_top=3), tmp_path / "o", seed=0)
        for a, b in zip(kept, kept[1:]):
            if a.val_accuracy == b.val_accuracy:
                assert a.epoch < b.epoch

    def test_same_seed_byte_identical_checkpoints(self, small_dataset, tmp_path):
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        cfg = ModelConfig(seed=11)
        tc = TrainConfig(epochs=2)
        train(small_dataset, cfg, tc, out1, seed=11)
        train(small_dataset, cfg, tc, out2, seed=11)
        files1 = sorted(p.relative_to(out1) for p in out1.rglob("*") if p.is_file())
        files2 = sorted(p.relative_to(out2) for p in out2.rglob("*") if p.is_file())
        assert files1 == files2
        for rel in files1:
            assert (out1 / rel).read_bytes() == (out2 / rel).read_bytes(), rel

    def test_no_flow_training_runs(self, small_dataset, tmp_path):
        kept = train(small_dataset, ModelConfig(seed=1, use_flow=False),
                     TrainConfig(epochs=2), tmp_path / "o", seed=1)
        assert len(kept) == 2
