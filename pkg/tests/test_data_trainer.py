import gzip
import math
import struct

import numpy as np
import pytest

from fylab import netmodel
from fylab.convex import b_omega, entropy, link
from fylab.data import (IDXConsistencyError, IDXLengthError, IDXMagicError, discrete_exact, empirical_joint,
                        gaussian_clusters, load_mnist_idx, read_idx_images, read_idx_labels, write_idx)
from fylab.diagnostics import DiagnosticsRecord
from fylab.trainer import (CSV_COLUMNS, MetricLog, TrainConfig, TrainingDiverged, read_csv, sgd_momentum_step,
                           steps_per_epoch, train, write_csv)


@pytest.fixture
def idx_pair(tmp_path):
    images = np.zeros((3, 2, 2), dtype=np.uint8)
    images[0, 0, 0] = 255
    images[1, 1, 1] = 128
    labels = np.array([7, 0, 9], dtype=np.uint8)
    paths = tmp_path / "img.gz", tmp_path / "lab.gz"
    write_idx(images, labels, *paths)
    return images, labels, paths


def test_idx_roundtrip(idx_pair, tmp_path):
    images, labels, (img, lab) = idx_pair
    np.testing.assert_array_equal(read_idx_images(img), images)
    ds = load_mnist_idx(img, lab)
    assert ds.inputs[0, 0] == 1.0 and ds.inputs[1, 3] == pytest.approx(128 / 255)
    assert ds.labels.tolist() == [7, 0, 9] and ds.input_dim == 4
    write_idx(images, labels, tmp_path / "i", tmp_path / "l", compress=False)
    np.testing.assert_array_equal(load_mnist_idx(tmp_path / "i", tmp_path / "l").inputs, ds.inputs)


def test_idx_errors(idx_pair, tmp_path):
    images, labels, (img, lab) = idx_pair
    with pytest.raises(IDXMagicError):
        read_idx_images(lab)
    raw = gzip.decompress(img.read_bytes())
    (tmp_path / "short").write_bytes(raw[:-1])
    with pytest.raises(IDXLengthError):
        read_idx_images(tmp_path / "short")
    (tmp_path / "stub").write_bytes(raw[:10])
    with pytest.raises(IDXLengthError):
        read_idx_images(tmp_path / "stub")
    (tmp_path / "two").write_bytes(struct.pack(">II", 2049, 2) + bytes([1, 2]))
    with pytest.raises(IDXConsistencyError):
        load_mnist_idx(img, tmp_path / "two")
    assert read_idx_labels(tmp_path / "two").tolist() == [1, 2]


def test_mnist_train_header(mnist_paths):
    if mnist_paths is None:
        pytest.skip("MNIST files not present")
    img, lab = mnist_paths
    raw = gzip.open(img).read(16) if img.suffix == ".gz" else img.read_bytes()[:16]
    assert struct.unpack(">IIII", raw) == (2051, 60000, 28, 28)
    labels = read_idx_labels(lab)
    assert labels.size == 60000 and labels.max() == 9


def test_discrete_exact_decomposition_offset():
    ds, counts = discrete_exact(2, 3, 2, seed=0, counts=[[1, 1], [1, 1]])
    assert len(ds) == 4
    _, joint = empirical_joint(ds)
    assert b_omega(entropy(2), joint) == pytest.approx(math.log(2), abs=1e-15)


def test_synthetic_determinism():
    a, b = gaussian_clusters(50, 4, 3, seed=9), gaussian_clusters(50, 4, 3, seed=9)
    np.testing.assert_array_equal(a.inputs, b.inputs)
    np.testing.assert_array_equal(a.labels, b.labels)
    c, _ = discrete_exact(4, 2, 3, seed=1)
    d, _ = discrete_exact(4, 2, 3, seed=1)
    np.testing.assert_array_equal(c.inputs, d.inputs)


def test_separated_clusters_are_learned():
    ds = gaussian_clusters(640, 5, 3, seed=0, separation=10.0)
    cfg = netmodel.ModelConfig(input_dim=5, output_dim=3, block_count=0)
    log = train(cfg, entropy(3), ds, TrainConfig(epochs=20, batch_size=64, lr=0.01))
    assert len(log.step_losses) == 200
    p = link(entropy(3), netmodel.forward(cfg, log.theta, ds.inputs))
    fit = np.mean(np.sum((p - np.eye(3)[ds.labels]) ** 2, axis=1))
    assert fit < 0.1


def test_sgd_momentum_step():
    th, g = np.array([1.0, -2.0]), np.array([0.5, 1.0])
    t1, v1 = sgd_momentum_step(th, g, np.zeros(2), 0.1, 0.0)
    np.testing.assert_allclose(t1, th - 0.1 * g)
    t0, _ = sgd_momentum_step(th, np.zeros(2), np.zeros(2), 0.1, 0.9)
    np.testing.assert_array_equal(t0, th)
    t1, v1 = sgd_momentum_step(th, g, np.zeros(2), 0.1, 0.9)
    t2, v2 = sgd_momentum_step(t1, g, v1, 0.1, 0.9)
    np.testing.assert_allclose(t1, th - 0.1 * g, rtol=1e-15)
    np.testing.assert_allclose(t2, t1 - 0.1 * 1.9 * g, rtol=1e-15)


def test_steps_and_partial_batch():
    assert steps_per_epoch(60000, 64) == 937
    ds = gaussian_clusters(100, 3, 2, seed=0)
    log = train(netmodel.ModelConfig(3, 2, 0), entropy(2), ds, TrainConfig(batch_size=32, epochs=2))
    assert len(log.step_losses) == 6 and [r.step for r in log.records] == list(range(6))


def test_zero_lr_keeps_parameters():
    ds = gaussian_clusters(64, 3, 2, seed=0)
    cfg = netmodel.architecture("a", 1, input_dim=3, output_dim=2, width=4)
    log = train(cfg, entropy(2), ds, TrainConfig(lr=0.0, epochs=5, shuffle=False))
    np.testing.assert_array_equal(log.theta, netmodel.init_params(cfg, "he", 0))
    assert len(set(log.step_losses)) == 1
    assert len({(r.U, r.L, r.fit_err_log) for r in log.records}) == 1


def test_training_reduces_loss_and_keeps_sandwich():
    ds = gaussian_clusters(1280, 6, 3, seed=1, separation=6.0)
    cfg = netmodel.architecture("a", 1, input_dim=6, output_dim=3, width=8)
    log = train(cfg, entropy(3), ds, TrainConfig(epochs=2))
    assert log.step_losses[-1] < log.step_losses[0]
    assert all(r.sandwich_ok for r in log.records)


def test_training_is_deterministic():
    ds = gaussian_clusters(256, 4, 3, seed=2)
    cfg = netmodel.architecture("b", 2, input_dim=4, output_dim=3, width=4)
    a = train(cfg, entropy(3), ds, TrainConfig(seed=5))
    b = train(cfg, entropy(3), ds, TrainConfig(seed=5))
    assert a.records == b.records and a.step_losses == b.step_losses


def test_divergence_reports_step():
    ds = gaussian_clusters(256, 4, 3, seed=2)
    cfg = netmodel.architecture("a", 2, input_dim=4, output_dim=3, width=4)
    with pytest.raises(TrainingDiverged) as info:
        train(cfg, entropy(3), ds, TrainConfig(lr=1e305, momentum=0.0))
    assert info.value.step >= 1


def test_train_rejects_mismatched_shapes():
    ds = gaussian_clusters(64, 4, 3, seed=0)
    with pytest.raises(ValueError):
        train(netmodel.ModelConfig(5, 3, 0), entropy(3), ds, TrainConfig())
    with pytest.raises(ValueError):
        train(netmodel.ModelConfig(4, 3, 0), entropy(2), ds, TrainConfig())


def _record(step):
    return DiagnosticsRecord(step, -1.5, -2.0, 0.5, -0.5, 1.0, 1.0, -1.5, -2.5, True, 8)


def test_csv_lines_and_roundtrip(tmp_path):
    empty = tmp_path / "e.csv"
    write_csv(MetricLog(), empty)
    assert empty.read_text() == ",".join(CSV_COLUMNS) + "\n"
    log = MetricLog()
    log.append(0.25, _record(0))
    one = tmp_path / "o.csv"
    write_csv(log, one)
    lines = one.read_text().splitlines()
    assert len(lines) == 2 and lines[1].startswith("0,0.25,-1.5,") and lines[1].endswith(",true,8")
    log.append(0.125, _record(3))
    write_csv(log, one)
    back = read_csv(one)
    assert back.records == log.records and back.losses == log.losses


def test_csv_errors(tmp_path):
    with pytest.raises(OSError, match="missing"):
        write_csv(MetricLog(), tmp_path / "missing" / "x.csv")
    log = MetricLog()
    log.append(0.1, _record(2))
    with pytest.raises(ValueError):
        log.append(0.1, _record(2))
