import gzip

import numpy as np
import pytest
from sklearn.linear_model import LogisticRegression

from zampling import data
from zampling.errors import MagicMismatchError, MissingFileError, TruncatedPayloadError


def write_idx(path, magic, arr):
    arr = np.asarray(arr, dtype=np.uint8)
    header = magic.to_bytes(4, "big") + b"".join(int(s).to_bytes(4, "big") for s in arr.shape)
    path.write_bytes(header + arr.tobytes())


@pytest.fixture
def fake_mnist(tmp_path):
    rng = np.random.default_rng(0)
    for split, count in (("train", 12), ("test", 5)):
        img, lab = data.MNIST_FILES[split]
        images = rng.integers(0, 256, (count, 28, 28))
        images[0, 0, 0] = 255
        write_idx(tmp_path / img, data.IMAGES_MAGIC, images)
        write_idx(tmp_path / lab, data.LABELS_MAGIC, rng.integers(0, 10, count))
    return tmp_path


def test_loads_and_normalises(fake_mnist):
    train, test = data.load_mnist(fake_mnist)
    assert train.images.shape == (12, 784) and len(test) == 5
    assert train.images[0, 0] == 1.0
    assert train.images.min() >= 0 and train.images.max() <= 1
    assert train.split == "train" and test.split == "test"


def test_gzip_fallback(fake_mnist):
    img = fake_mnist / data.MNIST_FILES["test"][0]
    (fake_mnist / (img.name + ".gz")).write_bytes(gzip.compress(img.read_bytes()))
    img.unlink()
    _, test = data.load_mnist(fake_mnist)
    assert len(test) == 5


def test_missing_file(fake_mnist):
    (fake_mnist / data.MNIST_FILES["train"][1]).unlink()
    with pytest.raises(MissingFileError):
        data.load_mnist(fake_mnist)


def test_swapped_magic(fake_mnist):
    lab = fake_mnist / data.MNIST_FILES["train"][1]
    raw = bytearray(lab.read_bytes())
    raw[:4] = (0x00000803).to_bytes(4, "big")
    lab.write_bytes(bytes(raw))
    with pytest.raises(MagicMismatchError):
        data.load_mnist(fake_mnist)


def test_truncated_payload(fake_mnist):
    img = fake_mnist / data.MNIST_FILES["train"][0]
    img.write_bytes(img.read_bytes()[:-10])
    with pytest.raises(TruncatedPayloadError):
        data.load_mnist(fake_mnist)


def test_no_data_dir(monkeypatch):
    monkeypatch.delenv(data.DATA_DIR_ENV, raising=False)
    with pytest.raises(MissingFileError):
        data.load_mnist()


def test_real_mnist_sizes(mnist):
    train, test = mnist
    assert len(train) == 60000 and len(test) == 10000
    assert train.images.shape[1] == 784
    assert train.images.max() == 1.0 and train.images.min() == 0.0


def test_real_mnist_byte_count():
    import os
    from pathlib import Path
    directory = os.environ.get(data.DATA_DIR_ENV)
    path = Path(directory or "/nonexistent") / "train-images-idx3-ubyte"
    if not path.exists():
        pytest.skip("MNIST not available")
    assert path.stat().st_size == 16 + 60000 * 784


def test_blobs_deterministic():
    a = data.synthetic_blobs(20, 3, 5, 4.0, seed=9)
    b = data.synthetic_blobs(20, 3, 5, 4.0, seed=9)
    assert np.array_equal(a.images, b.images) and np.array_equal(a.labels, b.labels)
    assert np.bincount(a.labels).tolist() == [20, 20, 20]


def linear_probe_accuracy(separation):
    train = data.synthetic_blobs(300, 5, 10, separation, seed=1)
    test = data.synthetic_blobs(300, 5, 10, separation, seed=1, split="test")
    clf = LogisticRegression(max_iter=2000).fit(train.images, train.labels)
    return clf.score(test.images, test.labels)


def test_blobs_separable_at_ten_sigma():
    assert linear_probe_accuracy(10.0) > 0.99


def test_blobs_indistinguishable_at_zero():
    assert abs(linear_probe_accuracy(0.0) - 1 / 5) < 0.05
