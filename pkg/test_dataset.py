import os
import shutil

import numpy as np

from mlsvm.dataset import (
    Dataset, apply_normalization, k_fold_indices, load_dataset, normalize_features,
    save_dataset, shuffle_dataset, stratified_split,
)
from mlsvm.exceptions import DataFormatError, DimensionMismatchError, DomainError, ValidationError

TEST_DIR = "test_dataset_data"


def _fresh_dir():
    if os.path.exists(TEST_DIR):
        shutil.rmtree(TEST_DIR)
    os.makedirs(TEST_DIR)


def _write(name, text):
    path = os.path.join(TEST_DIR, name)
    with open(path, "w") as f:
        f.write(text)
    return path


def _labeled(n_plus, n_minus):
    labels = np.array([1] * n_plus + [-1] * n_minus, dtype=np.int8)
    points = np.arange(len(labels), dtype=float).reshape(-1, 1)
    return Dataset(points, labels)


def test_load_sparse_text():
    print("--- Testing Sparse Text Loading ---")
    _fresh_dir()
    ds = load_dataset(_write("a.svm", "+1 1:0.5 3:2.0\n-1 2:1.0\n"))
    assert len(ds) == 2 and ds.n_features == 3 and ds.n_plus == 1
    assert np.array_equal(ds.points, [[0.5, 0.0, 2.0], [0.0, 1.0, 0.0]])
    assert list(ds.labels) == [1, -1]
    print("[v] Two rows, three features, one positive")

    padded = load_dataset(_write("b.svm", "+1 1:1\n-1 1:2\n"), n_features=4)
    assert padded.n_features == 4
    try:
        load_dataset(_write("c.svm", "+1 5:1\n-1 1:2\n"), n_features=4)
        raise AssertionError("index beyond n_features accepted")
    except DimensionMismatchError:
        print("[v] Expected width pads and bounds rows")

    sparse = load_dataset(_write("d.svm", "+1 1:0.5 3:2.0\n-1 2:1.0\n"), sparse=True)
    assert sparse.points.nnz == 3
    print("[v] Sparse matrix form keeps only stored values")

    unlabeled = load_dataset(_write("e.svm", "1:1 2:2\n2:3\n"))
    assert not unlabeled.is_labeled and unlabeled.n_plus == 0
    print("[v] Unlabeled rows")
    shutil.rmtree(TEST_DIR)


def test_label_mapping():
    print("--- Testing Label Mapping ---")
    _fresh_dir()
    zero_one = load_dataset(_write("a.svm", "0 1:1\n1 1:2\n0 1:3\n"))
    assert list(zero_one.labels) == [-1, 1, -1]
    assert zero_one.label_names == ("0", "1")
    print("[v] 0/1 maps smaller label to -1")

    signs = load_dataset(_write("b.svm", "1 1:1\n-1 1:2\n"))
    assert list(signs.labels) == [1, -1]
    print("[v] Numeric +-1 labels keep their sign")

    words = load_dataset(_write("c.svm", "spam 1:1\nham 1:2\n"))
    assert list(words.labels) == [1, -1]
    assert words.label_names == ("ham", "spam")
    print("[v] Text labels map lexicographically")

    try:
        load_dataset(_write("d.svm", "a 1:1\nb 1:2\nc 1:3\n"))
        raise AssertionError("three labels accepted")
    except DomainError as e:
        print(f"[v] Three labels rejected: {e}")
    shutil.rmtree(TEST_DIR)


def test_load_errors():
    print("--- Testing Load Errors ---")
    _fresh_dir()
    for name, text in [("empty.svm", ""), ("comments.svm", "# nothing\n\n")]:
        try:
            load_dataset(_write(name, text))
            raise AssertionError(f"{name} accepted")
        except DataFormatError as e:
            assert "no rows" in str(e)
    print("[v] Empty files rejected with 'no rows'")

    try:
        load_dataset(_write("bad.svm", "+1 1:0.5\n-1 2:x\n"))
        raise AssertionError("malformed line accepted")
    except DataFormatError as e:
        assert e.line_no == 2
        print(f"[v] Malformed line reported: {e}")

    try:
        load_dataset(_write("mixed.svm", "+1 1:1\n1:2\n"))
        raise AssertionError("mixed rows accepted")
    except DataFormatError as e:
        assert e.line_no == 2

    try:
        load_dataset(os.path.join(TEST_DIR, "missing.svm"))
        raise AssertionError("missing file accepted")
    except FileNotFoundError:
        print("[v] Missing file raises FileNotFoundError")

    try:
        load_dataset(_write("x.svm", "+1 1:1\n"), fmt="arff")
        raise AssertionError("unknown format accepted")
    except ValidationError:
        print("[v] Unknown format rejected")
    shutil.rmtree(TEST_DIR)


def test_load_csv():
    print("--- Testing CSV Loading ---")
    _fresh_dir()
    ds = load_dataset(_write("a.csv", "0.1,0.2,A\n0.3,0.4,B\n"), fmt="csv", label_column=2)
    assert np.allclose(ds.points, [[0.1, 0.2], [0.3, 0.4]])
    assert list(ds.labels) == [-1, 1]
    print("[v] Label column 2 maps A to -1 and B to +1")

    with_header = load_dataset(_write("b.csv", "f1,f2,label\n0.1,0.2,A\n0.3,0.4,B\n"), fmt="csv", label_column=2)
    assert len(with_header) == 2
    print("[v] Header row detected")

    first_label = load_dataset(_write("c.csv", "1,5,6\n0,7,8\n"), fmt="csv", label_column=0)
    assert np.array_equal(first_label.points, [[5, 6], [7, 8]])
    assert list(first_label.labels) == [1, -1]

    unlabeled = load_dataset(_write("d.csv", "1,2\n3,4\n"), fmt="csv")
    assert not unlabeled.is_labeled and unlabeled.n_features == 2
    print("[v] Unlabeled CSV")

    try:
        load_dataset(_write("e.csv", "1,2,A\n3,oops,B\n"), fmt="csv", label_column=2)
        raise AssertionError("bad cell accepted")
    except DataFormatError as e:
        assert e.line_no == 2
        print(f"[v] Bad cell reported: {e}")
    shutil.rmtree(TEST_DIR)


def test_save_roundtrip():
    print("--- Testing Save/Load Round Trip ---")
    _fresh_dir()
    points = np.array([[0.1, 0.0, 1.0 / 3.0], [-2.5e-7, 4.0, 7.0]])
    ds = Dataset(points, np.array([1, -1], dtype=np.int8))
    path = os.path.join(TEST_DIR, "out.svm")
    save_dataset(ds, path)
    back = load_dataset(path)
    assert np.array_equal(back.points, points)
    assert np.array_equal(back.labels, ds.labels)
    print("[v] Values and labels survive exactly")
    shutil.rmtree(TEST_DIR)


def test_normalization():
    print("--- Testing Normalization ---")
    ds = Dataset(np.array([[1.0, 5.0, 0.0], [3.0, 5.0, 2.0]]), np.array([1, -1], dtype=np.int8))

    scaled, params = normalize_features(ds, "minmax")
    assert np.allclose(scaled.points, [[0, 0, 0], [1, 0, 1]])
    print("[v] minmax maps (1, 3) to (0, 1) and a constant column to 0")

    test_set = Dataset(np.array([[2.0, 5.0, 1.0]]), np.array([1], dtype=np.int8))
    assert np.allclose(apply_normalization(test_set, params).points, [[0.5, 0.0, 0.5]])
    print("[v] Test rows use training statistics")

    z, _ = normalize_features(ds, "zscore")
    assert np.allclose(z.points, [[-1, 0, -1], [1, 0, 1]])
    print("[v] zscore maps (0, 2) to (-1, 1)")

    same, _ = normalize_features(ds, "none")
    assert same is ds

    try:
        apply_normalization(Dataset(np.zeros((1, 2))), params)
        raise AssertionError("width mismatch accepted")
    except DimensionMismatchError:
        print("[v] Width mismatch rejected")


def test_stratified_split():
    print("--- Testing Stratified Split ---")
    ds = _labeled(10, 90)
    train, test = stratified_split(ds, 0.2, seed=3)
    assert test.n_plus == 2 and test.n_minus == 18
    assert train.n_plus == 8 and train.n_minus == 72
    combined = np.sort(np.concatenate([train.points[:, 0], test.points[:, 0]]))
    assert np.array_equal(combined, np.arange(100))
    print("[v] 10/90 split at 0.2 puts 2/18 in test and partitions the rows")

    _, again = stratified_split(ds, 0.2, seed=3)
    assert np.array_equal(again.points, test.points)
    print("[v] Same seed, same split")

    _, small = stratified_split(_labeled(3, 10), 0.5, seed=0)
    assert small.n_plus == 2
    print("[v] 3 positives at 0.5 round half up to 2")

    try:
        stratified_split(_labeled(1, 10), 0.2, seed=0)
        raise AssertionError("one-point class accepted")
    except DomainError as e:
        print(f"[v] One-point class rejected: {e}")


def test_shuffle_and_folds():
    print("--- Testing Shuffle and Folds ---")
    ds = _labeled(5, 5)
    shuffled, perm = shuffle_dataset(ds, seed=1)
    assert np.array_equal(shuffled.points[:, 0], perm.astype(float))
    assert np.array_equal(shuffled.labels, ds.labels[perm])
    print("[v] Shuffle returns its permutation")

    folds = k_fold_indices(ds, 5, seed=0)
    assert len(folds) == 5
    for train_idx, val_idx in folds:
        assert np.count_nonzero(ds.labels[val_idx] == 1) == 1
        assert np.count_nonzero(ds.labels[val_idx] == -1) == 1
        assert len(np.intersect1d(train_idx, val_idx)) == 0
        assert len(train_idx) + len(val_idx) == 10
    all_val = np.sort(np.concatenate([v for _, v in folds]))
    assert np.array_equal(all_val, np.arange(10))
    print("[v] 5 folds of 1+1 partition the rows")

    try:
        k_fold_indices(_labeled(3, 10), 5, seed=0)
        raise AssertionError("class smaller than k accepted")
    except DomainError as e:
        print(f"[v] Class smaller than k rejected: {e}")


if __name__ == "__main__":
    test_load_sparse_text()
    test_label_mapping()
    test_load_errors()
    test_load_csv()
    test_save_roundtrip()
    test_normalization()
    test_stratified_split()
    test_shuffle_and_folds()
    print("--- Testing Complete ---")
