import gzip
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from ltcsnn.data import (MNIST_FILES, Dataset, downsample, encode_idx, load_dataset, load_idx,
                         load_mnist, make_blobs, make_moons, parse_idx, split, write_idx)
from ltcsnn.errors import ConfigError, IdxFormatError


def test_label_file_example():
    buf = struct.pack(">II", 0x00000801, 10) + bytes(range(10))
    labels = parse_idx(buf)
    assert labels.tolist() == list(range(10)) and labels.dtype == np.int64


def test_image_file_example():
    pixels = np.zeros((10, 28, 28), dtype=np.uint8)
    pixels[0, 0, 0] = 255
    pixels[9, 27, 27] = 51
    images = parse_idx(struct.pack(">IIII", 0x00000803, 10, 28, 28) + pixels.tobytes())
    assert images.shape == (10, 28, 28)
    assert images[0, 0, 0] == 1.0 and images[9, 27, 27] == 0.2
    assert parse_idx(encode_idx(pixels), scale=False).dtype == np.uint8


@pytest.mark.parametrize("buf", [
    b"\x00\x00",
    struct.pack(">II", 0x00000802, 1) + b"\x00",
    struct.pack(">II", 0x00000801, 5) + b"\x00" * 4,
    struct.pack(">I", 0x00000803) + b"\x00" * 4,
    struct.pack(">IIII", 0x00000803, 2**20, 2**20, 2**20),
])
def test_malformed_files_are_rejected(buf):
    with pytest.raises(IdxFormatError):
        parse_idx(buf)


@settings(max_examples=30)
@given(hnp.arrays(np.uint8, st.one_of(st.tuples(st.integers(0, 50)),
                                      st.tuples(st.integers(0, 4), st.integers(1, 5), st.integers(1, 5)))))
def test_idx_roundtrip_is_bit_exact(a):
    buf = encode_idx(a)
    assert encode_idx(parse_idx(buf, scale=False)) == buf
    np.testing.assert_array_equal(parse_idx(buf, scale=False), a)


def test_write_and_load_mnist_layout(tmp_path):
    rng = np.random.default_rng(0)
    imgs = rng.integers(0, 256, (6, 28, 28), dtype=np.uint8)
    labels = rng.integers(0, 10, 6).astype(np.uint8)
    for key in MNIST_FILES:
        data = imgs if "images" in key else labels
        write_idx(tmp_path / MNIST_FILES[key], data)
    # a gzipped copy is picked up when the plain file is missing
    path = tmp_path / MNIST_FILES["test_labels"]
    (tmp_path / (path.name + ".gz")).write_bytes(gzip.compress(path.read_bytes()))
    path.unlink()
    train, test = load_mnist(tmp_path)
    assert train.x.shape == (6, 1, 28, 28) and test.y.tolist() == labels.tolist()
    np.testing.assert_array_equal(load_idx(tmp_path / MNIST_FILES["train_images"]), imgs / 255.0)
    with pytest.raises(FileNotFoundError):
        load_mnist(tmp_path / "missing")


def test_split_examples():
    a, b = split(100, 3, (10, 10))
    assert not set(a) & set(b)
    c, d = split(100, 3, (10, 10))
    assert a.tolist() == c.tolist() and b.tolist() == d.tolist()
    assert [len(p) for p in split(60000, 0, (55000, 5000))] == [55000, 5000]
    with pytest.raises(ValueError):
        split(10, 0, (6, 5))


@given(st.integers(0, 2**32 - 1), st.integers(1, 200), st.lists(st.integers(0, 60), max_size=4))
def test_split_is_deterministic_and_disjoint(seed, n, sizes):
    if sum(sizes) > n:
        with pytest.raises(ValueError):
            split(n, seed, sizes)
        return
    parts = split(n, seed, sizes)
    flat = np.concatenate(parts) if parts else np.array([], dtype=int)
    assert len(set(flat.tolist())) == len(flat) == sum(sizes)
    assert all(p.tolist() == q.tolist() for p, q in zip(parts, split(n, seed, sizes)))


def test_split_datasets_keep_pairs():
    ds = Dataset(np.arange(20.0)[:, None], np.arange(20))
    tr, te = split(ds, 1, (15, 5))
    assert (tr.x[:, 0] == tr.y).all() and (te.x[:, 0] == te.y).all()


def test_downsample_examples():
    x = np.random.default_rng(0).uniform(0, 1, (3, 1, 28, 28))
    assert downsample(x, 2).shape == (3, 1, 14, 14)
    assert (downsample(np.full((28, 28), 0.3), 4) == 0.3).all()
    board = np.indices((28, 28)).sum(axis=0) % 2
    assert (downsample(board, 2) == 0.5).all()
    with pytest.raises(ValueError):
        downsample(x, 3)


def test_synthetic_generators():
    for make in (make_blobs, make_moons):
        a, b = make(300, seed=4), make(300, seed=4)
        np.testing.assert_array_equal(a.x, b.x)
        assert a.x.min() >= 0 and a.x.max() <= 1
    train, test = load_dataset("moons", seed=1, n_synthetic=100)
    assert (len(train), len(test)) == (80, 20)
    with pytest.raises(ConfigError):
        load_dataset("cifar")
