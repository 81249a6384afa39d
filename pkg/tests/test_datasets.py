import gzip
import json
import shutil

import numpy as np
import pytest

from lkdl import datasets
from lkdl.datasets import DatasetFormatError, LabeledDataset

from conftest import write_idx_images, write_idx_labels

@pytest.fixture
def idx_pair(tmp_path):
    images = str(tmp_path / "images.idx")
    labels = str(tmp_path / "labels.idx")
    write_idx_images(images, [[[0, 255], [51, 102]], [[255, 0], [0, 0]]])
    write_idx_labels(labels, [3, 7])
    return images, labels

def test_load_idx_fixture(idx_pair):
    dataset = datasets.load_idx(*idx_pair)
    np.testing.assert_allclose(dataset.samples, [[0.0, 1.0], [1.0, 0.0], [0.2, 0.0], [0.4, 0.0]])
    np.testing.assert_array_equal(dataset.labels, [4, 8])
    assert (dataset.p, dataset.n) == (4, 2)

def test_load_gzipped_idx(idx_pair, tmp_path):
    paths = []
    for path in idx_pair:
        with open(path, 'rb') as source, gzip.open(path + '.gz', 'wb') as target:
            shutil.copyfileobj(source, target)
        paths.append(path + '.gz')
    np.testing.assert_array_equal(datasets.load_idx(*paths).samples, datasets.load_idx(*idx_pair).samples)

def test_idx_label_count_mismatch(idx_pair, tmp_path):
    labels = str(tmp_path / "three.idx")
    write_idx_labels(labels, [1, 2, 3])
    with pytest.raises(DatasetFormatError, match="2 images"):
        datasets.load_idx(idx_pair[0], labels)

def test_idx_bad_magic_and_truncation(idx_pair, tmp_path):
    with pytest.raises(DatasetFormatError, match="magic"):
        datasets.load_idx(idx_pair[0], idx_pair[0])
    with open(idx_pair[0], 'rb') as handle:
        data = handle.read()
    truncated = str(tmp_path / "short.idx")
    with open(truncated, 'wb') as handle:
        handle.write(data[:-1])
    with pytest.raises(DatasetFormatError, match="Truncated"):
        datasets.load_idx(truncated, idx_pair[1])
    with pytest.raises(IOError):
        datasets.load_idx(str(tmp_path / "missing.idx"), idx_pair[1])

def test_load_csv(tmp_path):
    path = tmp_path / "data.csv"
    path.write_text("a,b,label\n0.5,1.5,2\n-1,2e-3,1\n")
    dataset = datasets.load_csv(str(path), label_column="label", header=True)
    np.testing.assert_allclose(dataset.samples, [[0.5, -1.0], [1.5, 0.002]])
    np.testing.assert_array_equal(dataset.labels, [2, 1])
    assert datasets.load_csv(str(path), label_column=2, header=True).n == 2

def test_load_csv_errors(tmp_path):
    path = tmp_path / "data.csv"
    path.write_text("a,b,label\n0.5,1.5,2\n")
    with pytest.raises(DatasetFormatError, match="not found"):
        datasets.load_csv(str(path), label_column="class", header=True)
    path.write_text("0.5,1.5,2\n1.0,1\n")
    with pytest.raises(DatasetFormatError, match="Line 2"):
        datasets.load_csv(str(path))
    path.write_text("0.5,1.5,2\n1.0,x,1\n")
    with pytest.raises(DatasetFormatError, match="line 2"):
        datasets.load_csv(str(path))
    path.write_text("0.5,1.5\n")
    with pytest.raises(DatasetFormatError):
        datasets.load_csv(str(path), label_column=5)

def test_csv_round_trip(tmp_path, rng):
    dataset = LabeledDataset(rng.standard_normal((3, 6)), [1, 2, 1, 3, 2, 1], "random")
    path = str(tmp_path / "out.csv")
    datasets.write_csv(dataset, path)
    loaded = datasets.load_csv(path)
    np.testing.assert_array_equal(loaded.samples, dataset.samples)
    np.testing.assert_array_equal(loaded.labels, dataset.labels)

def test_normalize_unit(rng):
    dataset = LabeledDataset(3.0 * rng.standard_normal((4, 10)), np.ones(10), "random")
    normalized = datasets.normalize_unit(dataset)
    np.testing.assert_allclose(np.linalg.norm(normalized.samples, axis=0), 1.0, atol=1e-12)
    cosine = np.sum(normalized.samples * dataset.samples, axis=0) / np.linalg.norm(dataset.samples, axis=0)
    np.testing.assert_allclose(cosine, 1.0)
    np.testing.assert_allclose(datasets.normalize_unit(normalized).samples, normalized.samples, atol=1e-15)
    assert normalized.normalized
    zero = LabeledDataset(np.zeros((2, 2)), [1, 2])
    with pytest.raises(ValueError):
        datasets.normalize_unit(zero)

def test_subsample_fraction(rng):
    dataset = LabeledDataset(rng.standard_normal((2, 30)), np.repeat([1, 2, 3], 10), "random")
    full = datasets.subsample_fraction(dataset, 1.0, 4)
    assert sorted(full.samples[0].tolist()) == sorted(dataset.samples[0].tolist())
    half = datasets.subsample_fraction(dataset, 0.5, 4)
    assert half.n == 15
    np.testing.assert_array_equal(half.samples, datasets.subsample_fraction(dataset, 0.5, 4).samples)
    with pytest.raises(ValueError, match="without samples"):
        datasets.subsample_fraction(dataset, 0.05, 4)
    with pytest.raises(ValueError):
        datasets.subsample_fraction(dataset, 0.0, 4)

def test_train_test_split_is_stratified(rng):
    dataset = LabeledDataset(rng.standard_normal((2, 40)), np.repeat([1, 2], 20))
    train, test = datasets.train_test_split(dataset, 0.25, 1)
    assert (train.n, test.n) == (30, 10)
    assert np.bincount(test.labels).tolist() == [0, 5, 5]

def test_noiseless_circles_are_radially_separable():
    dataset = datasets.synth_circles(50, noise_sigma=0.0, seed=3)
    radii = np.linalg.norm(dataset.samples, axis=0)
    np.testing.assert_allclose(radii[dataset.labels == 1], 1.0)
    np.testing.assert_allclose(radii[dataset.labels == 2], 3.0)

def test_planted_sparse_data():
    data, D0, Gamma0 = datasets.synth_planted_sparse(20, 50, 12, 3, seed=2, n_classes=2, coherence_threshold=0.8)
    assert np.linalg.norm(data.samples - D0.dot(Gamma0)) == 0.0
    assert np.all(np.count_nonzero(Gamma0, axis=0) == 3)
    assert datasets.mutual_coherence(D0) <= 0.8
    # every sample uses atoms of its own class only
    assert not np.any(Gamma0[6:, data.labels == 1]) and not np.any(Gamma0[:6, data.labels == 2])
    with pytest.raises(ValueError):
        datasets.synth_planted_sparse(20, 50, 12, 3, seed=2, coherence_threshold=0.0)

def test_load_csv_manifest(tmp_path, rng):
    train = LabeledDataset(rng.standard_normal((3, 8)), np.repeat([1, 2], 4))
    test = LabeledDataset(rng.standard_normal((3, 4)), [1, 2, 1, 2])
    datasets.write_csv(train, str(tmp_path / "train.csv"))
    datasets.write_csv(test, str(tmp_path / "test.csv"))
    manifest = tmp_path / "manifest.json"
    manifest.write_text(json.dumps({"format": "csv", "train": {"path": "train.csv"},
                                    "test": {"path": "test.csv"}}))
    loaded_train, loaded_test = datasets.load_manifest(str(manifest))
    assert loaded_train.normalized and loaded_test.n == 4
    np.testing.assert_allclose(np.linalg.norm(loaded_train.samples, axis=0), 1.0)

def test_synthetic_manifest(circles_manifest):
    train, test = datasets.load_manifest(circles_manifest(n_per_class=20))
    assert train.n + test.n == 40 and not train.normalized
    assert train.classes == [1, 2]

def test_unknown_manifest_format(tmp_path):
    manifest = tmp_path / "bad.json"
    manifest.write_text(json.dumps({"format": "hdf5"}))
    with pytest.raises(DatasetFormatError):
        datasets.load_manifest(str(manifest))
