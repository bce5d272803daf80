import os
import subprocess

import numpy as np
import pytest

import mnv2


def test_parameter_counts():
    assert mnv2.parameter_count(11) == 2237963
    assert mnv2.parameter_count(1000) == 3504872
    assert mnv2.FEATURE_CHANNELS == 1280
    assert len(mnv2.CLASS_NAMES) == 11


def test_archive_and_forward(tmp_path):
    path = tmp_path / "w.mnv2"
    mnv2.write_synthetic_archive(path, 11, 3)
    report = mnv2.validate_weights(path)
    assert report["tensor_count"] == 263
    assert report["head_classes"] == 11

    model = mnv2.Model.load(path)
    rng = np.random.default_rng(0)
    image = rng.integers(0, 256, size=(50, 70, 3), dtype=np.uint8)
    x = mnv2.preprocess(image, 32)
    assert x.shape == (1, 3, 32, 32)
    batch = np.concatenate([x, x])
    features = model.features(batch)
    assert features.shape == (2, 1280)
    assert np.all(features >= 0) and np.all(features <= 6)
    np.testing.assert_array_equal(features[0], features[1])
    logits = model.forward(x)
    assert logits.shape == (1, 11)


def test_preprocess_constant_image():
    image = np.full((40, 30, 3), 128, dtype=np.uint8)
    assert np.all(mnv2.resize(image, 32) == 128)
    x = mnv2.preprocess(image, 32)
    expected = (128 / 255 - 0.485) / 0.229
    assert abs(x[0, 0, 5, 5] - expected) < 1e-5
    with pytest.raises(mnv2.Error):
        mnv2.preprocess(image, 8)


def test_optimizer():
    assert mnv2.lr_at(10) == pytest.approx(1e-4)
    p, v = mnv2.sgd_step(np.array([1.0], np.float32), np.array([1.0], np.float32),
                         np.array([], np.float32), 0.1, 0.9, True, 0.0)
    assert p[0] == pytest.approx(0.81, abs=1e-7)
    assert v[0] == 1.0
    p, _ = mnv2.sgd_step(np.array([1.0], np.float32), np.array([1.0], np.float32),
                         np.array([], np.float32), 0.1, 0.9, False, 0.0)
    assert p[0] == pytest.approx(0.9, abs=1e-7)


def test_summaries_and_confusion():
    s = mnv2.summarize_runs([92.98, 92.81, 93.05, 92.71, 93.29])
    assert s["mean_accuracy"] == pytest.approx(92.968)
    assert s["disparity"] == pytest.approx(0.58)
    c = mnv2.confusion([0, 0, 1, 2], [0, 1, 1, 1], 4)
    assert c["accuracy"] == 0.5
    assert c["empty_rows"] == [False, False, False, True]
    np.testing.assert_allclose(c["normalized"][:3].sum(axis=1), 1.0)


@pytest.mark.skipif("MNV2_CLI" not in os.environ, reason="CLI path not provided")
def test_cli_round_trip(tmp_path):
    cli = os.environ["MNV2_CLI"]
    out = tmp_path / "w.mnv2"
    subprocess.run([cli, "init-weights", "--out", str(out)], check=True, capture_output=True)
    r = subprocess.run([cli, "validate-weights", str(out)], check=True, capture_output=True, text=True)
    assert r.stdout.startswith("ok: 263 tensors")
