"""End-to-end checks against reference results.

All of these are marked slow. The MNIST and COIL-20 tests also need the data
files; see the fixtures in conftest.py.
"""

import itertools

import numpy as np
import pytest
from fractal_ae import (
    FeatureSelector,
    HierarchyParams,
    Hyperparams,
    SelectionResult,
    SplitSpec,
    fit_linear_decoder,
    load_csv,
    load_idx,
    recon_error,
    split,
    split_holdout,
    synth_blocks,
)
from fractal_ae._datasets import prepare_splits
from fractal_ae._evalkit import classify_selection

pytestmark = pytest.mark.slow


def _test_recon(train, test, sel):
    return recon_error(test.x, sel, fit_linear_decoder(train.x, sel))


def _split(d, normalization):
    train, val, test = split(d, SplitSpec())
    return prepare_splits(train, [val, test], normalization)


def _idx(directory, stem):
    for name in (stem, stem + ".gz"):
        if (directory / name).exists():
            return directory / name
    pytest.skip(f"{stem} not found in {directory}")


@pytest.fixture
def mnist_splits(mnist_dir):
    def load(seed=0):
        train_file = load_idx(
            _idx(mnist_dir, "train-images-idx3-ubyte"),
            _idx(mnist_dir, "train-labels-idx1-ubyte"),
        )
        test_file = load_idx(
            _idx(mnist_dir, "t10k-images-idx3-ubyte"),
            _idx(mnist_dir, "t10k-labels-idx1-ubyte"),
        )
        train, val, test = split_holdout(train_file, test_file, seed=seed)
        return prepare_splits(train, [val, test], "none")

    return load


def test_synth_blocks_matches_exhaustive_oracle():
    d = synth_blocks(500, 4, 3, 0.01, seed=0)
    train, val, test = _split(d, "none")
    oracle = min(
        _test_recon(train, test, SelectionResult(np.array(c), np.ones(4)))
        for c in itertools.combinations(range(12), 4)
    )
    close, diverse = 0, 0
    for seed in range(5):
        selector = FeatureSelector(Hyperparams(k=4, seed=seed, log_every=0))
        sel = selector.fit(train.x, val.x).select()
        close += _test_recon(train, test, sel) <= 1.1 * oracle
        diverse += sorted(int(j) // 3 for j in sel.indices) == [0, 1, 2, 3]
    assert close >= 4
    assert diverse >= 4


def test_mnist_fae_opt1(mnist_splits):
    train, val, test = mnist_splits()
    selector = FeatureSelector(Hyperparams(k=50)).fit(train.x, val.x)
    sel = selector.select()
    assert _test_recon(train, test, sel) <= 0.030
    acc = classify_selection(train.x, train.labels, test.x, test.labels, sel)
    assert acc >= 0.85


def test_mnist_runs_are_bit_identical(mnist_splits, tmp_path):
    train, val, _ = mnist_splits()
    hp = Hyperparams(k=50, epochs=50)
    a, b = tmp_path / "a.npz", tmp_path / "b.npz"
    FeatureSelector(hp).fit(train.x, val.x).save(a)
    FeatureSelector(hp).fit(train.x, val.x).save(b)
    assert a.read_bytes() == b.read_bytes()


def test_mnist_fae_beats_iae(mnist_splits):
    wins = 0
    for seed in range(5):
        train, val, test = mnist_splits(seed)
        hp = Hyperparams(k=50, seed=seed)
        fae = FeatureSelector(hp, "fae").fit(train.x, val.x).select()
        iae = FeatureSelector(hp, "iae").fit(train.x, val.x).select()
        wins += _test_recon(train, test, fae) < _test_recon(train, test, iae)
    assert wins >= 4


def test_mnist_hierarchy_groups(mnist_splits):
    train, val, test = mnist_splits()
    hier = HierarchyParams.default(3, 50)
    selector = FeatureSelector(Hyperparams(k=50), "hfae", hier).fit(train.x, val.x)
    groups = selector.groups().groups
    sets = [set(g.indices.tolist()) for g in groups]
    assert all(not a & b for a, b in itertools.combinations(sets, 2))
    accs = [
        classify_selection(train.x, train.labels, test.x, test.labels, g)
        for g in groups
    ]
    assert max(accs) - min(accs) <= 0.05


def test_coil20_fae_opt1(coil20_csv):
    d = load_csv(coil20_csv, label_column=-1)
    train, val, test = _split(d, "minmax")
    sel = FeatureSelector(Hyperparams(k=50)).fit(train.x, val.x).select()
    assert _test_recon(train, test, sel) <= 0.020
    acc = classify_selection(train.x, train.labels, test.x, test.labels, sel)
    assert acc >= 0.95
