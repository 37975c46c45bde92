import math
import struct

import numpy as np
import pytest
from hypothesis import given, strategies as st

from otkhorn.core import ArgumentError
from otkhorn.data import (
    FG_HIGH,
    FormatError,
    competitive_ratio,
    gen_synthetic_image,
    l1_ground_cost,
    load_mnist_idx,
    read_cost_csv,
    read_idx_images,
    read_matrix_csv,
    read_measure_csv,
    write_idx,
    write_matrix_csv,
    write_measure_csv,
)


def test_synthetic_deterministic():
    a, b = gen_synthetic_image(42), gen_synthetic_image(42)
    np.testing.assert_array_equal(a.intensities, b.intensities)
    assert not np.array_equal(a.intensities, gen_synthetic_image(43).intensities)


def test_synthetic_foreground_square():
    for seed in range(100):
        img = gen_synthetic_image(seed)
        assert img.intensities.sum() == pytest.approx(1.0, abs=1e-12)
        assert img.foreground.sum() == 36
        rows, cols = np.nonzero(img.foreground)
        assert rows.max() - rows.min() == 5 and cols.max() - cols.min() == 5
        img.measure()


def test_synthetic_foreground_range():
    # background ~ U[0,1] and square ~ U[0,50] before normalization
    for seed in range(20):
        img = gen_synthetic_image(seed)
        bg, fg = img.intensities[~img.foreground], img.intensities[img.foreground]
        # the largest of 364 background draws is above 0.98 for these seeds
        assert fg.max() <= FG_HIGH / 0.98 * bg.max()
        assert 25 < fg.mean() / bg.mean() < 100


def test_synthetic_full_foreground_and_validation():
    img = gen_synthetic_image(0, side=5, fg_fraction=1.0)
    assert img.foreground.all()
    with pytest.raises(ArgumentError):
        gen_synthetic_image(0, fg_fraction=0.0)
    with pytest.raises(ArgumentError):
        gen_synthetic_image(0, side=1)


def test_ground_cost_examples():
    np.testing.assert_array_equal(l1_ground_cost(1).entries, [[0.0]])
    C2 = l1_ground_cost(2)
    assert C2.max_abs == 2 and np.all(np.diag(C2.entries) == 0)
    np.testing.assert_array_equal(C2.entries, C2.entries.T)
    C = l1_ground_cost(20)
    assert C.entries[0, 399] == 38 and C.max_abs == 38


@given(st.integers(0, 99), st.integers(0, 99), st.integers(0, 99))
def test_ground_cost_is_a_metric(i, j, k):
    C = l1_ground_cost(10).entries
    assert C[i, j] == C[j, i]
    assert C[i, k] <= C[i, j] + C[j, k]
    assert (C[i, j] == 0) == (i == j)


def test_competitive_ratio():
    assert competitive_ratio(0.3, 0.3) == 0.0
    assert competitive_ratio(math.e * 2.0, 2.0) == pytest.approx(1.0)
    assert competitive_ratio(0.1, 0.7) == -competitive_ratio(0.7, 0.1)
    with pytest.raises(ValueError):
        competitive_ratio(0.0, 1.0)


def test_idx_zero_image_is_uniform(tmp_path):
    p = tmp_path / "zero.idx"
    write_idx(p, np.zeros((1, 28, 28), dtype=np.uint8))
    (img,) = load_mnist_idx(p)
    np.testing.assert_allclose(img.intensities, 1 / 784, rtol=1e-12)


def test_idx_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    images = rng.integers(0, 256, size=(4, 6, 6), dtype=np.uint8)
    labels = rng.integers(0, 10, size=4, dtype=np.uint8)
    write_idx(tmp_path / "i", images, labels, tmp_path / "l")
    np.testing.assert_array_equal(read_idx_images(tmp_path / "i"), images)
    loaded = load_mnist_idx(tmp_path / "i", tmp_path / "l")
    assert [g.label for g in loaded] == labels.tolist()
    for g, raw in zip(loaded, images):
        a = raw.astype(float)
        a[a == 0] = 1e-6
        np.testing.assert_array_equal(g.intensities, a / a.sum())


def test_idx_rejects_bad_files(tmp_path):
    images = np.ones((2, 3, 3), dtype=np.uint8)
    write_idx(tmp_path / "i", images, np.zeros(2, np.uint8), tmp_path / "l")
    with pytest.raises(FormatError):
        load_mnist_idx(tmp_path / "l")  # label magic passed as images
    body = (tmp_path / "i").read_bytes()
    (tmp_path / "le").write_bytes(struct.pack("<4I", 0x803, 2, 3, 3) + body[16:])
    with pytest.raises(FormatError):
        read_idx_images(tmp_path / "le")
    (tmp_path / "short").write_bytes(body[:-1])
    with pytest.raises(FormatError):
        read_idx_images(tmp_path / "short")
    (tmp_path / "long").write_bytes(body + b"\0")
    with pytest.raises(FormatError):
        read_idx_images(tmp_path / "long")
    write_idx(tmp_path / "i3", np.ones((3, 3, 3), dtype=np.uint8))
    with pytest.raises(FormatError):
        load_mnist_idx(tmp_path / "i3", tmp_path / "l")


def test_csv_round_trip(tmp_path):
    A = np.random.default_rng(1).uniform(size=(3, 3)) / 7
    write_matrix_csv(tmp_path / "a.csv", A)
    np.testing.assert_array_equal(read_matrix_csv(tmp_path / "a.csv"), A)
    assert read_cost_csv(tmp_path / "a.csv").n == 3
    m = gen_synthetic_image(1, side=4).measure()
    write_measure_csv(tmp_path / "m.csv", m.weights)
    np.testing.assert_array_equal(read_measure_csv(tmp_path / "m.csv").weights, m.weights)
    (tmp_path / "col.csv").write_text("0.25\n0.75\n")
    np.testing.assert_array_equal(read_measure_csv(tmp_path / "col.csv").weights, [0.25, 0.75])
