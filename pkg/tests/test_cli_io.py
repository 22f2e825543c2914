import json
import re
import struct

import numpy as np
import pytest

from tsynd.cli_io import IMAGE_MAGIC, LABEL_MAGIC, load_config, load_idx, parse_config, parse_idx, run_cli, save_idx, write_idx
from tsynd.errors import BadMagicError, ConfigError, CorruptFileError, DataError
from tsynd.harness import Dataset, make_shapes, read_metrics
from tsynd.harness.metrics import HEADER


def idx_bytes(array):
    array = np.asarray(array, dtype=np.uint8)
    return bytes([0, 0, 8, array.ndim]) + struct.pack(f">{array.ndim}I", *array.shape) + array.tobytes()


class TestIdx:
    def test_round_trip(self, tmp_path):
        d = Dataset(np.random.default_rng(0).uniform(size=(3, 1, 5, 4)), [0, 2, 1], 3)
        save_idx(d, tmp_path / "x.idx", tmp_path / "y.idx")
        back = load_idx(tmp_path / "x.idx", tmp_path / "y.idx")
        assert back.images.shape == (3, 1, 5, 4)
        assert np.abs(back.images - d.images).max() <= 1 / 255
        assert np.array_equal(back.labels, d.labels)

    def test_canonical_header(self):
        raw = idx_bytes(np.arange(2 * 3 * 4).reshape(2, 3, 4))
        assert raw[:4] == bytes([0, 0, 8, 3])
        f = parse_idx(raw)
        assert f.magic == IMAGE_MAGIC and f.dims == (2, 3, 4)
        assert f.array()[1, 2, 3] == 23

    def test_label_magic(self):
        assert parse_idx(idx_bytes([1, 2, 3])).magic == LABEL_MAGIC

    def test_count_mismatch(self, tmp_path):
        (tmp_path / "x.idx").write_bytes(idx_bytes(np.zeros((3, 2, 2))))
        (tmp_path / "y.idx").write_bytes(idx_bytes([0, 1]))
        with pytest.raises(DataError):
            load_idx(tmp_path / "x.idx", tmp_path / "y.idx")

    @pytest.mark.parametrize("head", [bytes([1, 0, 8, 1]), bytes([0, 0, 9, 1]), bytes([0, 0, 8, 0])])
    def test_bad_magic(self, head):
        with pytest.raises(BadMagicError):
            parse_idx(head + struct.pack(">I", 1) + b"\x00")

    def test_swapped_files(self, tmp_path):
        (tmp_path / "x.idx").write_bytes(idx_bytes(np.zeros((2, 2, 2))))
        (tmp_path / "y.idx").write_bytes(idx_bytes([0, 1]))
        with pytest.raises(BadMagicError):
            load_idx(tmp_path / "y.idx", tmp_path / "x.idx")

    def test_truncated_and_trailing(self):
        raw = idx_bytes(np.zeros((2, 3, 3)))
        for bad in (raw[:-1], raw[:10], raw[:2], raw + b"\x00"):
            with pytest.raises(CorruptFileError):
                parse_idx(bad)

    def test_write_rejects_floats(self, tmp_path):
        with pytest.raises(DataError):
            write_idx(tmp_path / "f.idx", np.zeros(3))


class TestConfig:
    def test_defaults_and_paths(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"mode": "tsynd", "epochs": 3, "gen": {"K": 4}, "train_images": "a.idx", "ae_epochs": 2}))
        cfg = load_config(path)
        assert (cfg.run.mode, cfg.run.epochs, cfg.run.gen.K, cfg.extra["ae_epochs"]) == ("tsynd", 3, 4, 2)
        assert cfg.path("train_images") == str(tmp_path / "a.idx")
        assert cfg.path("test_images") is None

    @pytest.mark.parametrize("doc", [{"epoch": 3}, {"gen": {"steps": 2}}, {"gen": 3}, {"mode": "mixup"}, {"batch_size": "big"}, []])
    def test_rejects(self, doc):
        with pytest.raises(ConfigError):
            parse_config(doc)

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text("{")
        with pytest.raises(ConfigError):
            load_config(path)


def write_config(path, data_dir, out_dir=None, **extra):
    doc = {f"{s}_{k}": str(data_dir / f"{s}-{k}.idx") for s in ("train", "val", "test") for k in ("images", "labels")}
    if out_dir is not None:
        doc["out_dir"] = str(out_dir)
    doc.update(extra)
    path.write_text(json.dumps(doc))
    return str(path)


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """make-shapes -> ae-train -> clf-train x 3 modes -> eval x 3 perturbations -> plot."""
    root = tmp_path_factory.mktemp("pipeline")
    data = root / "data"
    assert run_cli(["make-shapes", "--n", "80", "--out", str(data)]) == 0
    assert run_cli(["ae-train", "--config", write_config(root / "ae.json", data), "--out", str(root / "ae"), "--epochs", "1"]) == 0
    cfg = write_config(
        root / "clf.json", data, epochs=2, batch_size=16, ae_checkpoint=str(root / "ae" / "ae.tsck"), gen={"iterations": 2, "K": 4}
    )
    for mode in ("baseline", "noise", "tsynd"):
        assert run_cli(["clf-train", "--config", cfg, "--mode", mode, "--out", str(root / mode)]) == 0
    clfs = []
    for mode in ("baseline", "noise", "tsynd"):
        clfs += ["--clf", str(root / mode / f"clf-{mode}.tsck")]
    assert run_cli(["eval", "--config", cfg, "--out", str(root / "eval"), *clfs, "--perturb", "none", "gauss", "fgsm"]) == 0
    assert run_cli(["plot", "--metrics", str(root / "eval" / "metrics.csv"), "--out", str(root / "plots")]) == 0
    return root, cfg


class TestCli:
    def test_usage_errors(self, tmp_path, capsys):
        assert run_cli(["clf-train"]) == 1
        assert "usage" in capsys.readouterr().err
        assert run_cli([]) == 1
        assert run_cli(["frobnicate"]) == 1
        assert run_cli(["make-shapes", "--n", "two", "--out", str(tmp_path)]) == 1

    def test_data_errors(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"epochz": 1}))
        assert run_cli(["clf-train", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
        (tmp_path / "bad.idx").write_bytes(b"\x07\x07\x07\x07")
        cfg.write_text(json.dumps({"train_images": "bad.idx", "train_labels": "bad.idx", "val_images": "bad.idx", "val_labels": "bad.idx"}))
        assert run_cli(["clf-train", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
        assert run_cli(["clf-train", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path / "o")]) == 2

    def test_make_shapes_deterministic(self, tmp_path):
        for name in ("a", "b"):
            assert run_cli(["make-shapes", "--n", "400", "--seed", "0", "--out", str(tmp_path / name)]) == 0
        files = sorted(p.name for p in (tmp_path / "a").iterdir())
        assert files == [f"{s}-{k}.idx" for s in ("test", "train", "val") for k in ("images", "labels")]
        for f in files:
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
        d = load_idx(tmp_path / "a" / "train-images.idx", tmp_path / "a" / "train-labels.idx")
        assert len(d) == 400 and np.abs(d.images - make_shapes(400, 0).images).max() <= 1 / 255

    def test_refuses_overwrite(self, tmp_path):
        out = tmp_path / "out"
        assert run_cli(["make-shapes", "--n", "8", "--out", str(out)]) == 0
        assert run_cli(["make-shapes", "--n", "8", "--out", str(out)]) == 1
        assert run_cli(["make-shapes", "--n", "8", "--out", str(out), "--force"]) == 0

    def test_pipeline_rows(self, pipeline):
        root, _ = pipeline
        rows = read_metrics(root / "eval" / "metrics.csv")
        assert len(rows) == 9
        assert {(r.run_id, r.perturbation) for r in rows} == {
            (m, p) for m in ("baseline", "noise", "tsynd") for p in ("none", "gauss:0.2", "fgsm:0.1")
        }
        assert all(r.split == "test" and r.metric == "accuracy" and 0 <= r.value <= 1 for r in rows)
        header = (root / "eval" / "metrics.csv").read_text().splitlines()[0]
        assert header == ",".join(HEADER)

    def test_plot_labels_match_csv(self, pipeline):
        root, _ = pipeline
        charts = sorted(p.name for p in (root / "plots").iterdir())
        assert charts == ["accuracy_fgsm_0.1.svg", "accuracy_gauss_0.2.svg", "accuracy_none.svg"]
        rows = read_metrics(root / "eval" / "metrics.csv")
        for pert, name in (("none", "accuracy_none.svg"), ("fgsm:0.1", "accuracy_fgsm_0.1.svg")):
            text = (root / "plots" / name).read_text()
            labels = [float(v) for v in re.findall(r">\s*([01]\.\d{3})\s*<", text)]
            expected = [round(r.value, 3) for r in rows if r.perturbation == pert]
            assert labels == pytest.approx(expected, abs=5e-4)

    def test_plot_reproducible(self, pipeline, tmp_path):
        root, _ = pipeline
        assert run_cli(["plot", "--metrics", str(root / "eval" / "metrics.csv"), "--out", str(tmp_path)]) == 0
        for p in (root / "plots").iterdir():
            assert (tmp_path / p.name).read_bytes() == p.read_bytes()

    def test_empty_csv(self, tmp_path, caplog):
        csv = tmp_path / "empty.csv"
        csv.write_text(",".join(HEADER) + "\n")
        out = tmp_path / "plots"
        assert run_cli(["plot", "--metrics", str(csv), "--out", str(out)]) == 0
        assert not out.exists() or not any(out.iterdir())
        assert any(r.levelname == "WARNING" for r in caplog.records)

    def test_malformed_csv(self, tmp_path):
        csv = tmp_path / "bad.csv"
        csv.write_text("x,y\n")
        assert run_cli(["plot", "--metrics", str(csv), "--out", str(tmp_path / "p")]) == 2

    def test_checkpoint_meta(self, pipeline):
        from tsynd.models import ClassifierModel

        root, _ = pipeline
        meta = ClassifierModel.load(root / "tsynd" / "clf-tsynd.tsck").meta
        assert meta["mode"] == "tsynd" and meta["run_id"] == "tsynd" and meta["seed"] == 0

    def test_ablate(self, pipeline, tmp_path):
        root, cfg = pipeline
        assert run_cli(["ablate", "--config", cfg, "--out", str(tmp_path)]) == 0
        rows = read_metrics(tmp_path / "metrics.csv")
        assert {r.run_id for r in rows if r.split == "val"} == {"tsynd-entropy", "tsynd-mi"}
        assert (tmp_path / "clf-tsynd-entropy.tsck").exists() and (tmp_path / "clf-tsynd-mi.tsck").exists()

    def test_synth_and_trace_plots(self, pipeline, tmp_path):
        root, cfg = pipeline
        clf = str(root / "baseline" / "clf-baseline.tsck")
        assert run_cli(["synth", "--config", cfg, "--clf", clf, "--n", "4", "--out", str(tmp_path / "s")]) == 0
        assert run_cli(["synth", "--config", cfg, "--clf", clf, "--n", "4", "--adversarial", "--out", str(tmp_path / "a")]) == 0
        sidecar = json.loads((tmp_path / "a" / "synth.json").read_text())
        assert len(sidecar) == 4 and all("image_difference" in r and r["trace"] for r in sidecar)
        assert (tmp_path / "s" / "synth.tsyd").exists()
        args = ["plot", "--sidecar", str(tmp_path / "a" / "synth.json"), "--out", str(tmp_path / "p")]
        assert run_cli(args) == 0
        assert sorted(p.name for p in (tmp_path / "p").iterdir()) == ["image_difference.svg", "u_traces.svg"]
