import numpy as np
import pytest
import torch
from PIL import Image

from mvanet.checkpoint import Checkpoint
from mvanet.config import RunConfig
from mvanet.data import Sample, generate_synthetic, read_mask, save_dataset, write_image
from mvanet.errors import ConfigError, DataError, GeometryError, TrainingError
from mvanet.training import build_model, evaluate, infer, train

TINY = RunConfig(image_size=128, widths=(4, 8, 8, 8, 8), dim=8, heads=2, windows=(2, 4), steps=3, batch_size=2, lr=1e-3, out="")


@pytest.fixture(scope="module")
def samples():
    return generate_synthetic(5, 3, 128)


@pytest.fixture(scope="module")
def trained(samples, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    return train(TINY, samples, out_dir=out), out


def test_zero_lr_leaves_parameters(samples):
    result = train(TINY.replace(lr=0.0), samples)
    torch.manual_seed(TINY.seed)
    fresh = build_model(TINY).state_dict()
    for name, arr in result.checkpoint.arrays.items():
        if "running" in name or "num_batches" in name:
            continue  # batch-norm statistics still track the data
        assert np.array_equal(arr, fresh[name].float().numpy()), name


def test_same_seed_same_checkpoint(samples, trained):
    again = train(TINY, samples)
    assert again.checkpoint.to_bytes() == trained[0].checkpoint.to_bytes()
    assert again.losses == trained[0].losses


def test_run_directory_contents(trained):
    result, out = trained
    assert result.checkpoint_path == out / "checkpoint.bin"
    assert Checkpoint.load(out / "checkpoint.bin").step == 3
    lines = (out / "train.log").read_text().splitlines()
    assert len(lines) == 3 and lines[0].startswith("step=1 ") and "total=" in lines[0]
    assert (out / "config.txt").read_text() == TINY.to_text()


def test_non_finite_loss_writes_diagnostic(samples, tmp_path):
    bad = [Sample(np.full_like(s.image, np.nan), s.mask, s.id) for s in samples]
    with pytest.raises(TrainingError, match="non-finite loss at step 1"):
        train(TINY, bad, out_dir=tmp_path)
    assert "step=1" in (tmp_path / "diagnostic.txt").read_text()


def test_training_input_errors(samples):
    with pytest.raises(DataError, match="empty"):
        train(TINY, [])
    with pytest.raises(DataError, match="config expects 256x256"):
        train(TINY.replace(image_size=256), samples)
    with pytest.raises(ConfigError, match="paths.data"):
        train(TINY)


def test_evaluate_untrained_fields(samples, trained, tmp_path):
    report = evaluate(trained[1] / "checkpoint.bin", samples, out_dir=tmp_path)
    for key in ("f_max", "f_weighted", "s_measure", "e_measure", "mae"):
        assert 0.0 <= getattr(report, key) <= 1.0
    assert report.images_evaluated == 3 and report.throughput > 0
    assert (tmp_path / "report.txt").is_file() and (tmp_path / "report.tsv").is_file()
    with pytest.raises(DataError, match="empty"):
        evaluate(trained[0].checkpoint, [])


def test_evaluate_from_dataset_root(samples, trained, tmp_path):
    save_dataset(samples, tmp_path)
    a = evaluate(trained[0].checkpoint, tmp_path)
    assert a.images_evaluated == 3


def test_infer_writes_quantized_prediction(samples, trained, tmp_path):
    write_image(tmp_path / "in.ppm", samples[0].image)
    lines = []
    pred = infer(trained[1] / "checkpoint.bin", tmp_path / "in.ppm", tmp_path / "out.pgm", echo=lines.append)
    assert pred.shape == (128, 128) and 0 < pred.min() and pred.max() < 1
    stored = np.asarray(Image.open(tmp_path / "out.pgm"), dtype=np.float64)
    assert np.abs(stored / 255 - pred).max() <= 0.5 / 255 + 1e-6
    assert lines and lines[0].startswith("latency_ms=")
    again = infer(trained[1] / "checkpoint.bin", tmp_path / "in.ppm", tmp_path / "out2.pgm")
    assert np.array_equal(pred, again)
    assert (tmp_path / "out.pgm").read_bytes() == (tmp_path / "out2.pgm").read_bytes()
    assert read_mask(tmp_path / "out.pgm").shape == (1, 1, 128, 128)


def test_infer_rejects_indivisible_size(trained, tmp_path):
    write_image(tmp_path / "odd.ppm", np.zeros((1, 3, 100, 128), np.float32))
    with pytest.raises(GeometryError, match="divisible"):
        infer(trained[0].checkpoint, tmp_path / "odd.ppm", tmp_path / "o.pgm")
