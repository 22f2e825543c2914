import numpy as np
import pytest

import tsynd.harness.evaluation as evaluation
from tsynd.diffcore import SeededRng, Tensor, backward
from tsynd.errors import ConfigError, DataError, FormatError, ShapeError, SpecError
from tsynd.harness import (
    Dataset,
    MetricsRecord,
    Perturbation,
    RunConfig,
    ablate_measure,
    cross_entropy,
    evaluate,
    evaluation_rows,
    fgsm,
    gradcam,
    make_quadrant_task,
    make_shapes,
    metrics_to_csv,
    read_metrics,
    subsample,
    train_classifier,
    write_metrics,
)
from tsynd.models import ClassifierModel, classifier_spec
from tsynd.neuralnet import Dense, Dropout, Flatten, NetworkSpec, ParameterStore, ReLU, init_params
from tsynd.synthesis import GenConfig


def two_class(n_per_class, seed=0):
    images = np.random.default_rng(seed).uniform(size=(2 * n_per_class, 1, 4, 4))
    return Dataset(images, np.repeat([0, 1], n_per_class), 2)


def quadrant_mass(heat):
    h, w = heat.shape
    return heat[: h // 2, : w // 2].sum() / heat.sum()


class TestDataset:
    def test_validation(self):
        with pytest.raises(DataError):
            Dataset(np.zeros((2, 4, 4)), [0, 1], 2)
        with pytest.raises(DataError):
            Dataset(np.zeros((2, 1, 4, 4)), [0], 2)
        with pytest.raises(DataError):
            Dataset(np.zeros((2, 1, 4, 4)), [0, 2], 2)
        with pytest.raises(DataError):
            Dataset(np.zeros((0, 1, 4, 4)), [], 2)

    def test_shapes_deterministic_and_prefix_stable(self):
        a, b = make_shapes(12, 3), make_shapes(20, 3)
        assert np.array_equal(a.images, b.images[:12])
        assert a.images.min() >= 0 and a.images.max() <= 1
        assert list(a.class_counts()) == [3, 3, 3, 3]

    def test_splits_differ(self):
        assert not np.array_equal(make_shapes(4, 0, "train").images, make_shapes(4, 0, "test").images)


class TestSubsample:
    def test_identity(self):
        d = two_class(15)
        s = subsample(d, 1.0, 0)
        assert np.array_equal(s.images, d.images) and np.array_equal(s.labels, d.labels)

    def test_balanced_tenth(self):
        s = subsample(two_class(50), 0.1, 0)
        assert len(s) == 10 and list(s.class_counts()) == [5, 5]

    def test_ceiling_keeps_one(self):
        s = subsample(two_class(30), 0.01, 0)
        assert list(s.class_counts()) == [1, 1]

    def test_nested_matches_direct_counts(self):
        d = two_class(100)
        nested = subsample(subsample(d, 0.5, 1), 0.2, 2)
        direct = subsample(d, 0.1, 3)
        assert list(nested.class_counts()) == list(direct.class_counts()) == [10, 10]

    def test_seeded(self):
        d = two_class(40)
        assert np.array_equal(subsample(d, 0.25, 7).images, subsample(d, 0.25, 7).images)
        assert not np.array_equal(subsample(d, 0.25, 7).images, subsample(d, 0.25, 8).images)

    def test_errors(self):
        with pytest.raises(ValueError):
            subsample(two_class(4), 0.0, 0)
        with pytest.raises(DataError):
            subsample(Dataset(np.zeros((2, 1, 4, 4)), [0, 0], 2), 0.5, 0)


class TestPerturbation:
    @pytest.mark.parametrize("text, out", [("none", "none"), ("gauss:0.2", "gauss:0.2"), ("gaussian(0.2)", "gauss:0.2"), ("fgsm=0.1", "fgsm:0.1")])
    def test_parse(self, text, out):
        assert str(Perturbation.parse(text)) == out

    @pytest.mark.parametrize("text", ["blur:1", "gauss:-1", "fgsm"])
    def test_reject(self, text):
        with pytest.raises(ValueError):
            Perturbation.parse(text)


class TestFgsm:
    def test_zero_eps_identity(self, trained_clf, shapes_small):
        x = shapes_small[2].images[:20]
        assert np.array_equal(fgsm(trained_clf, x, shapes_small[2].labels[:20], 0.0), x)

    def test_bound_and_step(self, trained_clf, shapes_small):
        test = shapes_small[2]
        x, y, eps = test.images[:50], test.labels[:50], 0.1
        adv = fgsm(trained_clf, x, y, eps)
        delta = adv - x
        assert np.abs(delta).max(axis=(1, 2, 3)).max() <= eps + 1e-6
        assert adv.min() >= 0 and adv.max() <= 1
        xt = Tensor(x, requires_grad=True)
        backward(cross_entropy(trained_clf.frozen().logits(xt), y, reduce="sum"))
        step = x + eps * np.sign(xt.grad)
        free = (xt.grad != 0) & (step >= 0) & (step <= 1)
        assert free.mean() > 0.5
        assert np.allclose(np.abs(delta[free]), eps, atol=1e-6)

    def test_accuracy_drop(self, trained_clf, shapes_small):
        test = shapes_small[2]
        clean = evaluate(trained_clf, test)
        attacked = evaluate(trained_clf, test, "fgsm:0.1")
        assert clean - attacked >= 0.05

    def test_dims_mismatch(self, trained_clf):
        with pytest.raises(ShapeError):
            fgsm(trained_clf, np.zeros((2, 1, 8, 8), np.float32), [0, 1], 0.1)


class TestEvaluate:
    def test_zero_strengths_equal_clean(self, trained_clf, shapes_small):
        test = shapes_small[2]
        clean = evaluate(trained_clf, test)
        assert evaluate(trained_clf, test, "gauss:0") == clean
        assert evaluate(trained_clf, test, "fgsm:0") == clean

    def test_memorizing_model(self):
        train = make_shapes(32, 5)
        result = train_classifier(RunConfig(epochs=60, seed=0, batch_size=16), train, train)
        assert evaluate(result.model, train) == 1.0

    def test_does_not_mutate(self, trained_clf, shapes_small):
        before = trained_clf.params.content_hash()
        for p in ("none", "gauss:0.2", "fgsm:0.1"):
            evaluate(trained_clf, shapes_small[2], p)
        assert trained_clf.params.content_hash() == before

    def test_seeded_noise(self, trained_clf, shapes_small):
        test = shapes_small[2]
        a = evaluate(trained_clf, test, "gauss:0.5", seed=4)
        assert a == evaluate(trained_clf, test, "gauss:0.5", seed=4)
        assert 0.0 <= a <= 1.0

    def test_threads_match_sequential(self, trained_clf, shapes_small, monkeypatch):
        monkeypatch.setattr(evaluation, "CHUNK", 32)
        test = shapes_small[2]
        for p in ("none", "gauss:0.2", "fgsm:0.1"):
            assert evaluate(trained_clf, test, p, seed=1, threads=4) == evaluate(trained_clf, test, p, seed=1, threads=0)

    def test_dims_mismatch(self, trained_clf):
        with pytest.raises(ShapeError):
            evaluate(trained_clf, Dataset(np.zeros((2, 1, 8, 8)), [0, 1], 4))


class TestRunConfig:
    def test_defaults(self):
        cfg = RunConfig()
        assert (cfg.epochs, cfg.batch_size, cfg.run_id) == (100, 64, "baseline")

    @pytest.mark.parametrize("kwargs", [{"mode": "mixup"}, {"fraction": 0.0}, {"fraction": 1.5}, {"mode": "tsynd", "batch_size": 7}, {"epochs": 0}])
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            RunConfig(**kwargs)

    def test_noise_mode_never_ascends(self):
        assert RunConfig(mode="noise").generation().iterations == 0
        assert RunConfig(mode="tsynd").generation().iterations == 50

    def test_gen_from_mapping(self):
        assert RunConfig(gen={"K": 4}).gen == GenConfig(K=4)


class TestTraining:
    def test_missing_autoencoder(self, shapes_small):
        with pytest.raises(ConfigError):
            train_classifier(RunConfig(mode="tsynd", epochs=1), shapes_small[0], shapes_small[1])

    def test_dims_disagree(self, shapes_small):
        with pytest.raises(DataError):
            train_classifier(RunConfig(epochs=1), shapes_small[0], Dataset(np.zeros((2, 1, 8, 8)), [0, 1], 4, "val"))

    def test_separable_task(self):
        train, val = make_quadrant_task(200, 0), make_quadrant_task(100, 1, split="val")
        result = train_classifier(RunConfig(epochs=8, seed=0), train, val)
        assert result.best_val_accuracy > 0.9
        assert evaluate(result.model, val) == result.best_val_accuracy

    def test_metrics_rows(self, shapes_small):
        result = train_classifier(RunConfig(epochs=2, seed=0, fraction=0.1), shapes_small[0], shapes_small[1])
        keys = [(r.epoch, r.split, r.metric) for r in result.metrics]
        assert keys == [(0, "train", "loss"), (0, "val", "accuracy"), (1, "train", "loss"), (1, "val", "accuracy")]
        assert result.best_val_accuracy == max(r.value for r in result.metrics if r.metric == "accuracy")

    def test_deterministic(self, shapes_small, tmp_path):
        cfg = RunConfig(epochs=2, seed=3, fraction=0.1)
        a = train_classifier(cfg, shapes_small[0], shapes_small[1])
        b = train_classifier(cfg, shapes_small[0], shapes_small[1])
        assert metrics_to_csv(a.metrics) == metrics_to_csv(b.metrics)
        assert a.model.params.content_hash() == b.model.params.content_hash()

    def test_noise_equals_degenerate_tsynd(self, shapes_small, trained_ae):
        train, val, _ = shapes_small
        small = subsample(train, 0.02, 0)
        seen = {}

        def hook(name):
            return lambda epoch, b, x, y: seen.setdefault(name, []).append((x.copy(), y.copy()))

        gen = GenConfig(sigma=0.0, iterations=0)
        train_classifier(RunConfig(mode="noise", epochs=1, batch_size=8, gen=GenConfig(sigma=0.0)), small, val, trained_ae, hook("noise"))
        train_classifier(RunConfig(mode="tsynd", epochs=1, batch_size=8, gen=gen), small, val, trained_ae, hook("tsynd"))
        assert len(seen["noise"]) == len(seen["tsynd"]) == 3
        for (xn, yn), (xt, yt) in zip(seen["noise"], seen["tsynd"]):
            assert np.array_equal(xn, xt) and np.array_equal(yn, yt)

    def test_half_batch_layout(self, shapes_small, trained_ae):
        small = subsample(shapes_small[0], 0.02, 0)
        batches = []
        cfg = RunConfig(mode="noise", epochs=1, batch_size=8, gen=GenConfig(sigma=0.0))
        train_classifier(cfg, small, shapes_small[1], trained_ae, lambda e, b, x, y: batches.append(x))
        order = SeededRng(0).child("shuffle", 0).permutation(len(small))
        first = small.images[order[:8]]
        assert np.array_equal(batches[0][:4], first[:4])
        assert not np.array_equal(batches[0][4:], first[4:])


class TestAblation:
    def test_rows_and_degeneracy(self, shapes_small, trained_ae):
        cfg = RunConfig(epochs=1, batch_size=16, fraction=0.03, gen=GenConfig(iterations=0))
        results = ablate_measure(cfg, shapes_small[0], shapes_small[1], trained_ae)
        assert set(results) == {"entropy", "mi"}
        for measure, result in results.items():
            assert {r.run_id for r in result.metrics} == {f"tsynd-{measure}"}
            assert any(r.split == "val" and r.metric == "accuracy" for r in result.metrics)
        assert results["entropy"].model.params.content_hash() == results["mi"].model.params.content_hash()


class TestMetrics:
    def test_csv_format(self, tmp_path):
        rows = [MetricsRecord("baseline", 0, 3, "test", "gauss:0.2", "accuracy", 0.123456789)]
        text = metrics_to_csv(rows)
        assert text == "run_id,seed,epoch,split,perturbation,metric,value\nbaseline,0,3,test,gauss:0.2,accuracy,0.123457\n"
        path = tmp_path / "m.csv"
        write_metrics(rows, path)
        assert path.read_bytes() == text.encode()
        back = read_metrics(path)
        assert back[0].value == pytest.approx(0.123457) and back[0].epoch == 3

    def test_evaluation_rows(self, trained_clf, shapes_small):
        rows = evaluation_rows("baseline", 0, 11, trained_clf, shapes_small[2], ["none", "fgsm:0.1"])
        assert [(r.split, r.perturbation, r.metric) for r in rows] == [("test", "none", "accuracy"), ("test", "fgsm:0.1", "accuracy")]

    def test_bad_files(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(FormatError):
            read_metrics(path)
        path.write_text("run_id,seed,epoch,split,perturbation,metric,value\nx,0,zero,test,none,accuracy,1\n")
        with pytest.raises(FormatError):
            read_metrics(path)
        path.write_text("")
        assert read_metrics(path) == []


def blob_detector():
    """Hand-set classifier whose class-1 logit counts cells where conv channel 0 fires on a bright blob."""
    spec = classifier_spec(2)
    arrays = {k: np.zeros_like(v) for k, v in init_params(spec, SeededRng(0)).arrays().items()}
    arrays["0.weight"][0, 0] = 1 / 16
    arrays["2.weight"][0, 0] = 1 / 16
    arrays["2.bias"][0] = -0.3  # bars stay below threshold, blobs do not
    arrays["5.weight"][0, :49] = 1.0
    arrays["8.weight"][0, 0] = 1.0
    arrays["11.weight"][1, 0] = 1.0
    return ClassifierModel(spec, ParameterStore(arrays))


class TestGradcam:
    def test_range(self, trained_clf, shapes_small):
        for i in range(4):
            heat = gradcam(trained_clf, shapes_small[2].images[i], int(shapes_small[2].labels[i]))
            assert heat.shape == (28, 28)
            assert heat.min() >= 0 and (heat.max() == 1.0 or not heat.any())

    def test_zero_head_row(self, trained_clf, shapes_small):
        arrays = {k: v.copy() for k, v in trained_clf.params.arrays().items()}
        arrays["11.weight"][2] = 0.0
        model = ClassifierModel(trained_clf.spec, ParameterStore(arrays))
        assert not gradcam(model, shapes_small[2].images[0], 2).any()

    def test_no_conv(self):
        spec = NetworkSpec((1, 4, 4), (Flatten(), Dense(8), ReLU(), Dropout(0.5), Dense(2))).validate()
        model = ClassifierModel(spec, init_params(spec, SeededRng(0)))
        with pytest.raises(SpecError):
            gradcam(model, np.zeros((1, 4, 4), np.float32), 0)

    def test_bad_class(self, trained_clf):
        with pytest.raises(ValueError):
            gradcam(trained_clf, np.zeros((1, 28, 28), np.float32), 9)

    def test_blob_detector_localizes(self):
        model = blob_detector()
        val = make_quadrant_task(40, 1, split="val")
        masses = [quadrant_mass(gradcam(model, val.images[i], 1)) for i in range(1, 40, 2)]
        assert min(masses) > 0.9

    def test_memorizing_model_quadrant(self):
        train, val = make_quadrant_task(64, 0), make_quadrant_task(100, 1, split="val")
        result = train_classifier(RunConfig(epochs=60, seed=0), train, val)
        model = result.last_model
        assert evaluate(model, train) == 1.0
        heats = [gradcam(model, val.images[i], 1) for i in range(1, 100, 2)]
        masses = [quadrant_mass(h) if h.any() else 0.0 for h in heats]
        assert np.mean(masses) > 0.5
