import numpy as np
import pytest

from tsynd.diffcore import SeededRng, Tensor, finite_diff_check, precision, tsum
from tsynd.errors import DataError, ShapeError, SpecError
from tsynd.harness import RunConfig, evaluate, make_quadrant_task, train_classifier
from tsynd.models import (
    AutoencoderModel,
    ClassifierModel,
    LatentCode,
    classifier_spec,
    classify_logits,
    decode,
    encode,
    reconstruction_loss,
    train_autoencoder,
)
from tsynd.neuralnet import ParameterStore, sample_masks


def zeroed(store: ParameterStore) -> ParameterStore:
    return ParameterStore({k: np.zeros_like(v) for k, v in store.arrays().items()})


class TestArchitectures:
    def test_classifier_layout(self):
        spec = classifier_spec(4)
        kinds = [layer.kind for layer in spec.layers]
        assert kinds == ["conv", "relu", "conv", "relu", "flatten", "dense", "relu", "dropout", "dense", "relu", "dropout", "dense"]
        assert spec.output_dims == (4,)
        assert spec.dims_trace()[4] == (32, 7, 7)

    def test_color_and_binary_variants(self):
        assert classifier_spec(3, in_channels=3).input_dims == (3, 28, 28)
        assert classifier_spec(2, binary_head=True).output_dims == (1,)
        with pytest.raises(SpecError):
            classifier_spec(3, binary_head=True)

    def test_autoencoder_dims(self):
        ae = AutoencoderModel.build(SeededRng(0))
        assert ae.latent_dims == (8, 7, 7)
        x = np.random.default_rng(0).random((2, 1, 28, 28)).astype(np.float32)
        assert decode(ae, ae.encode_tensor(x)).dims == (2, 1, 28, 28)

    def test_dropout_only_in_head(self):
        clf = ClassifierModel.build(4, SeededRng(0))
        assert all(i > clf.last_conv_index() for i in clf.spec.dropout_indices())


class TestEncodeDecode:
    def test_encode_deterministic_and_tagged(self):
        ae = AutoencoderModel.build(SeededRng(1))
        x = np.random.default_rng(0).random((1, 28, 28)).astype(np.float32)
        a, b = encode(ae, x, source_index=3, label=2), encode(ae, x)
        assert a.provenance == "encoded" and a.label == 2 and a.source_index == 3
        assert a.value.tobytes() == b.value.tobytes()

    def test_zero_ae_gives_zero_latent(self):
        ae = AutoencoderModel.build(SeededRng(1))
        ae = AutoencoderModel(ae.encoder, ae.decoder, zeroed(ae.params))
        assert not encode(ae, np.ones((1, 28, 28))).value.any()

    def test_dims_mismatch(self):
        ae = AutoencoderModel.build(SeededRng(1))
        with pytest.raises(ShapeError):
            encode(ae, np.ones((1, 27, 27)))
        with pytest.raises(ShapeError):
            decode(ae, np.ones((8, 6, 6)))

    def test_decode_bounded_for_extreme_latents(self):
        ae = AutoencoderModel.build(SeededRng(2))
        z = SeededRng(3).normal((4, 8, 7, 7)) * 50.0
        out = decode(ae, z).data
        assert out.min() >= 0.0 and out.max() <= 1.0
        out = decode(ae, SeededRng(3).normal((8, 7, 7))).data
        assert (out > 0).all() and (out < 1).all()

    def test_decode_gradient(self):
        ae = AutoencoderModel.build(SeededRng(4), size=12, latent_channels=3)
        with precision(np.float64):
            store = ParameterStore({k: v.astype(np.float64) for k, v in ae.params.arrays().items()})
        model = AutoencoderModel(ae.encoder, ae.decoder, store)
        z = SeededRng(5).normal((3, 3, 3))
        assert finite_diff_check(lambda t: tsum(model.decode_tensor(t)), z, h=1e-5) < 1e-3

    def test_latent_code_provenance(self):
        z = LatentCode(np.zeros(3), label=1)
        assert z.evolve(np.ones(3), "noised").label == 1
        with pytest.raises(ValueError):
            LatentCode(np.zeros(3), provenance="dreamed")

    def test_no_mutation(self):
        ae = AutoencoderModel.build(SeededRng(6))
        clf = ClassifierModel.build(4, SeededRng(7))
        h_ae, h_clf = ae.params.content_hash(), clf.params.content_hash()
        x = np.random.default_rng(0).random((2, 1, 28, 28)).astype(np.float32)
        classify_logits(clf, decode(ae, ae.encode_tensor(x)))
        assert ae.params.content_hash() == h_ae and clf.params.content_hash() == h_clf


class TestClassifier:
    def test_zero_params_uniform(self):
        clf = ClassifierModel.build(4, SeededRng(0))
        clf = ClassifierModel(clf.spec, zeroed(clf.params))
        logits = classify_logits(clf, np.ones((1, 28, 28))).data
        assert not logits.any()

    def test_p0_mask_matches_maskless(self):
        clf = ClassifierModel.build(4, SeededRng(0))
        x = np.random.default_rng(0).random((3, 1, 28, 28)).astype(np.float32)
        masks = sample_masks(clf.spec, 1, SeededRng(1), p_override=0.0, batch=3)[0]
        assert np.array_equal(classify_logits(clf, x, masks).data, classify_logits(clf, x).data)

    def test_trunk_then_head_equals_full(self):
        clf = ClassifierModel.build(4, SeededRng(0))
        x = np.random.default_rng(0).random((3, 1, 28, 28)).astype(np.float32)
        assert np.array_equal(clf.head(clf.trunk(x)).data, clf.logits(x).data)

    def test_separable_task_accuracy(self):
        train = make_quadrant_task(200, 0, split="train")
        val = make_quadrant_task(100, 1, split="val")
        result = train_classifier(RunConfig(epochs=6, seed=0), train, val)
        assert evaluate(result.model, val) > 0.9

    def test_save_load(self, tmp_path):
        clf = ClassifierModel.build(4, SeededRng(0))
        clf.save(tmp_path / "clf.tsck", meta={"run_id": "x"})
        again = ClassifierModel.load(tmp_path / "clf.tsck")
        assert again.meta == {"run_id": "x"}
        assert again.params.content_hash() == clf.params.content_hash()
        with pytest.raises(SpecError):
            AutoencoderModel.load(tmp_path / "clf.tsck")


class TestAutoencoderTraining:
    def test_memorizes_one_sample(self):
        x = np.random.default_rng(0).random((1, 1, 12, 12)).astype(np.float32)
        x = (x > 0.5).astype(np.float32) * 0.8 + 0.1
        ae = AutoencoderModel.build(SeededRng(0), size=12)
        train_autoencoder(ae, x, 400, SeededRng(0), lr=3e-3)
        assert float(reconstruction_loss(ae, x).data) < 1e-3

    def test_empty_dataset(self):
        with pytest.raises(DataError):
            train_autoencoder(AutoencoderModel.build(SeededRng(0)), np.zeros((0, 1, 28, 28)), 1, SeededRng(0))

    def test_same_seed_same_curve(self):
        x = np.random.default_rng(0).random((20, 1, 12, 12)).astype(np.float32)
        curves = []
        for _ in range(2):
            ae = AutoencoderModel.build(SeededRng(0), size=12)
            curves.append(train_autoencoder(ae, x, 2, SeededRng(1), batch_size=8))
        assert curves[0] == curves[1]

    def test_shapes_training(self, trained_ae, shapes_small):
        curve = trained_ae.curve
        assert curve[-1] < curve[0]
        _, val, _ = shapes_small
        assert float(reconstruction_loss(trained_ae, val.images[:100]).data) < max(curve)
        z = [encode(trained_ae, val.images[i]).value for i in (0, 1)]
        assert np.linalg.norm(z[0] - z[1]) > 0

    def test_save_load(self, tmp_path, trained_ae):
        trained_ae.save(tmp_path / "ae.tsck")
        again = AutoencoderModel.load(tmp_path / "ae.tsck")
        z = np.random.default_rng(0).normal(size=(8, 7, 7)).astype(np.float32)
        assert decode(again, z).data.tobytes() == decode(trained_ae, z).data.tobytes()
