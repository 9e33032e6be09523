import gzip
import itertools
import struct

import numpy as np
import pytest
from fractal_ae import (
    ContractViolationError,
    DataFormatError,
    Dataset,
    SplitSpec,
    impute_mean,
    load_csv,
    load_idx,
    lstsq,
    normalize_minmax,
    normalize_zscore,
    profile_k,
    split,
    split_holdout,
    synth_blocks,
    write_csv,
)
from fractal_ae._datasets import (
    IDX_IMAGE_MAGIC,
    IDX_LABEL_MAGIC,
    prepare_splits,
    split_indices,
)
from fractal_ae._matrix import mean_sq


def _write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_load_csv_basic(tmp_path):
    d = load_csv(_write(tmp_path, "a.csv", "1,2\n3,4\n"))
    assert d.x.tolist() == [[1.0, 2.0], [3.0, 4.0]]
    assert d.labels is None
    assert d.provenance["format"] == "csv"


def test_load_csv_label_column(tmp_path):
    path = _write(tmp_path, "a.csv", "1,2,0\n3,4,1\n5,6,1\n")
    d = load_csv(path, label_column=-1)
    assert d.m == 2
    assert d.labels.tolist() == [0, 1, 1]


def test_load_csv_header_and_named_label(tmp_path):
    path = _write(tmp_path, "a.csv", "class,a,b\ncat,1,2\ndog,3,4\ncat,5,6\n")
    d = load_csv(path, has_header=True, label_column="class")
    assert d.feature_names == ("a", "b")
    assert d.labels.tolist() == [0, 1, 0]
    assert d.provenance["classes"] == ["cat", "dog"]


def test_load_csv_missing_cells_become_nan(tmp_path):
    d = load_csv(_write(tmp_path, "a.csv", "1,,3\n4,5,6\n"))
    assert np.isnan(d.x[0, 1])
    assert d.has_missing


@pytest.mark.parametrize(
    ("text", "line"),
    [("1,2\n3\n", 2), ("1,2\n3,x\n", 2), ("1,2\n\n3,4\n5,6,7\n", 4)],
)
def test_load_csv_errors_carry_line_numbers(tmp_path, text, line):
    with pytest.raises(DataFormatError) as info:
        load_csv(_write(tmp_path, "bad.csv", text))
    assert info.value.line == line
    assert f"bad.csv:{line}" in str(info.value)


@pytest.mark.parametrize("cell", ["inf", "-inf", "nan", "NaN", "1e999"])
def test_load_csv_rejects_non_finite_cells(tmp_path, cell):
    with pytest.raises(DataFormatError, match="non-finite") as info:
        load_csv(_write(tmp_path, "bad.csv", f"1,2\n3,{cell}\n"))
    assert info.value.line == 2


def test_load_csv_empty_file(tmp_path):
    with pytest.raises(DataFormatError, match="no data rows"):
        load_csv(_write(tmp_path, "empty.csv", ""))
    with pytest.raises(DataFormatError, match="empty file"):
        load_csv(_write(tmp_path, "empty.csv", ""), has_header=True)


def test_load_csv_unknown_label_column(tmp_path):
    path = _write(tmp_path, "a.csv", "a,b\n1,2\n")
    with pytest.raises(DataFormatError, match="not in header"):
        load_csv(path, has_header=True, label_column="c")
    with pytest.raises(DataFormatError, match="out of range"):
        load_csv(path, has_header=True, label_column=5)


@pytest.mark.parametrize("seed", range(3))
def test_csv_write_read_identity(tmp_path, seed):
    gen = np.random.default_rng(seed)
    d = Dataset(gen.normal(size=(7, 4)), gen.integers(0, 3, 7))
    path = tmp_path / "round.csv"
    write_csv(path, d)
    back = load_csv(path, has_header=True, label_column="label")
    assert np.array_equal(back.x, d.x)
    assert np.array_equal(back.labels, d.labels)
    assert back.feature_names == ("f0", "f1", "f2", "f3")


def _idx_images(images):
    n, rows, cols = images.shape
    header = struct.pack(">4I", IDX_IMAGE_MAGIC, n, rows, cols)
    return header + images.astype(np.uint8).tobytes()


def _idx_labels(labels):
    return struct.pack(">2I", IDX_LABEL_MAGIC, len(labels)) + bytes(labels)


def _reference_decode(raw, index, rows, cols):
    offset = 16 + index * rows * cols
    return [raw[offset + j] / 255.0 for j in range(rows * cols)]


def test_load_idx_zero_image(tmp_path):
    path = tmp_path / "images.idx"
    path.write_bytes(_idx_images(np.zeros((1, 28, 28))))
    d = load_idx(path)
    assert d.x.shape == (1, 784)
    assert not d.x.any()


def test_load_idx_pixel_layout_and_labels(tmp_path):
    gen = np.random.default_rng(0)
    images = gen.integers(0, 256, (10, 28, 28))
    raw = _idx_images(images)
    (tmp_path / "images.idx").write_bytes(raw)
    (tmp_path / "labels.idx").write_bytes(_idx_labels(list(range(10))))
    d = load_idx(tmp_path / "images.idx", tmp_path / "labels.idx")
    assert d.n == 10
    assert d.m == 784
    assert d.labels.tolist() == list(range(10))
    for i in range(10):
        assert d.x[i].tolist() == _reference_decode(raw, i, 28, 28)
    assert d.x[3, 28 * 5 + 7] == images[3, 5, 7] / 255.0


def test_load_idx_gzip(tmp_path):
    images = np.full((3, 28, 28), 255)
    path = tmp_path / "images.idx.gz"
    path.write_bytes(gzip.compress(_idx_images(images)))
    d = load_idx(path)
    assert d.x.shape == (3, 784)
    assert np.all(d.x == 1.0)


def test_load_idx_bad_magic(tmp_path):
    path = tmp_path / "images.idx"
    path.write_bytes(struct.pack(">4I", 0x00000801, 1, 2, 2) + bytes(4))
    with pytest.raises(DataFormatError, match="bad magic"):
        load_idx(path)


def test_load_idx_truncated(tmp_path):
    path = tmp_path / "images.idx"
    path.write_bytes(_idx_images(np.zeros((2, 4, 4)))[:-5])
    with pytest.raises(DataFormatError, match="truncated data"):
        load_idx(path)
    path.write_bytes(b"\x00\x00")
    with pytest.raises(DataFormatError, match="truncated header"):
        load_idx(path)


def test_load_idx_count_mismatch(tmp_path):
    (tmp_path / "images.idx").write_bytes(_idx_images(np.zeros((3, 2, 2))))
    (tmp_path / "labels.idx").write_bytes(_idx_labels([1, 2]))
    with pytest.raises(DataFormatError, match="2 labels for 3 images"):
        load_idx(tmp_path / "images.idx", tmp_path / "labels.idx")


def test_normalize_minmax_example():
    d = normalize_minmax(Dataset(np.array([[0.0, 3.0], [5.0, 3.0], [10.0, 3.0]])))
    assert d.x[:, 0].tolist() == [0.0, 0.5, 1.0]
    assert d.x[:, 1].tolist() == [0.0, 0.0, 0.0]
    assert d.provenance["normalization"]["mode"] == "minmax"


def test_minmax_fitted_on_train_only():
    gen = np.random.default_rng(1)
    train = Dataset(gen.normal(size=(50, 6)))
    test = Dataset(gen.normal(5.0, 1.0, size=(20, 6)))
    scaled_train = normalize_minmax(train)
    assert np.allclose(scaled_train.x.min(axis=0), 0)
    assert np.allclose(scaled_train.x.max(axis=0), 1)
    scaled_test = normalize_minmax(test, fit_on=train)
    lo = train.x.min(axis=0)
    expected = (test.x - lo) / (train.x.max(axis=0) - lo)
    assert np.allclose(scaled_test.x, expected)
    assert scaled_test.provenance["normalization"]["offset"] == lo.tolist()


def test_normalize_zscore():
    gen = np.random.default_rng(2)
    d = normalize_zscore(Dataset(gen.normal(3.0, 2.0, size=(200, 3))))
    assert np.allclose(d.x.mean(axis=0), 0, atol=1e-12)
    assert np.allclose(d.x.std(axis=0), 1)


def test_impute_mean_uses_fit_split():
    train = Dataset(np.array([[1.0, np.nan], [3.0, 4.0]]))
    test = Dataset(np.array([[np.nan, np.nan]]))
    assert impute_mean(train).x.tolist() == [[1.0, 4.0], [3.0, 4.0]]
    filled = impute_mean(test, fit_on=train)
    assert filled.x.tolist() == [[2.0, 4.0]]
    assert filled.provenance["imputation"]["cells"] == 2


def test_impute_all_missing_feature_is_zero():
    d = impute_mean(Dataset(np.array([[np.nan, 1.0], [np.nan, 2.0]])))
    assert d.x[:, 0].tolist() == [0.0, 0.0]


def test_prepare_splits_imputes_when_only_test_is_missing():
    train = Dataset(np.array([[0.0], [2.0]]))
    test = Dataset(np.array([[np.nan], [2.0]]))
    _, scaled = prepare_splits(train, [test], "minmax")
    assert scaled.x.tolist() == [[0.5], [1.0]]


def test_split_sizes():
    train, val, test = split(Dataset(np.zeros((100, 2))), SplitSpec())
    assert (train.n, val.n, test.n) == (72, 8, 20)
    assert train.provenance["part"] == "train"
    assert train.provenance["split"]["seed"] == 0


@pytest.mark.parametrize("n", [13, 57, 101, 999])
def test_split_is_partition(n):
    parts = split_indices(n, SplitSpec(seed=n))
    joined = np.concatenate(parts)
    assert sorted(joined.tolist()) == list(range(n))
    assert all(len(p) > 0 for p in parts)


def test_split_deterministic():
    a = split_indices(50, SplitSpec(seed=4))
    b = split_indices(50, SplitSpec(seed=4))
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_split_too_few_rows():
    with pytest.raises(ContractViolationError, match="too few"):
        split_indices(4, SplitSpec())


@pytest.mark.parametrize(
    "ratios", [(0.5, 0.5, 0.0), (0.5, 0.3, 0.3), (-0.1, 0.6, 0.5)]
)
def test_split_spec_validation(ratios):
    with pytest.raises(ContractViolationError):
        SplitSpec(*ratios)


def test_split_holdout_sizes_and_disjointness():
    d = Dataset(np.arange(200.0).reshape(100, 2), np.arange(100))
    test = Dataset(-np.arange(100.0).reshape(50, 2))
    train, val, held = split_holdout(d, test, n_trainval=60, n_test=30, seed=3)
    assert (train.n, val.n, held.n) == (54, 6, 30)
    assert not set(train.labels.tolist()) & set(val.labels.tolist())
    assert np.all(held.x <= 0)


def test_split_holdout_rejects_oversampling():
    d = Dataset(np.zeros((10, 2)))
    with pytest.raises(ContractViolationError):
        split_holdout(d, d, n_trainval=20, n_test=5)


def test_profile_k():
    assert profile_k("mnist", "opt1") == 50
    assert profile_k("mice", "opt2") == 8
    assert profile_k("arcene", "opt2") == 50
    with pytest.raises(ContractViolationError):
        profile_k("cifar", "opt1")


def test_synth_blocks_noise_free():
    d = synth_blocks(30, 4, 3, 0.0, seed=2)
    assert d.x.shape == (30, 12)
    assert len(np.unique(d.x, axis=1).T) == 4
    for b in range(4):
        block = d.x[:, 3 * b : 3 * b + 3]
        assert np.array_equal(block[:, 0], block[:, 2])
    assert d.feature_names[4] == "b1_f1"


def test_synth_blocks_single_block_is_rank_one_plus_noise():
    d = synth_blocks(100, 1, 5, 0.01, seed=0)
    singular = np.linalg.svd(d.x, compute_uv=False)
    assert singular[1] < 0.05 * singular[0]


def test_synth_blocks_deterministic():
    a = synth_blocks(5, 2, 2, 0.1, 7)
    b = synth_blocks(5, 2, 2, 0.1, 7)
    assert np.array_equal(a.x, b.x)
    assert np.array_equal(a.labels, b.labels)


def test_synth_blocks_best_subset_takes_one_per_block():
    d = synth_blocks(500, 4, 3, 0.01, seed=0)

    def error(cols):
        coef = lstsq(d.x[:, cols], d.x)
        return mean_sq(d.x - d.x[:, cols] @ coef)

    best = min(itertools.combinations(range(12), 4), key=lambda c: error(list(c)))
    assert sorted(j // 3 for j in best) == [0, 1, 2, 3]
