from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lsconf.data import (
    LabeledDataset,
    concat,
    gen_blobs,
    load_csv,
    load_features_csv,
    save_csv,
    train_eval_split,
    unique_label_expand,
)
from lsconf.errors import ConfigurationError, ParseError


def test_zero_spread_sits_on_anchors():
    ds = gen_blobs(4, 3, 1, spread=0.0, seed=5)
    np.testing.assert_allclose(np.linalg.norm(ds.features, axis=1), 10.0)
    np.testing.assert_array_equal(ds.labels, [0, 1, 2, 3])


@given(st.integers(1, 6), st.integers(1, 5), st.integers(1, 8), st.integers(0, 2**31))
@settings(max_examples=30, deadline=None)
def test_blobs_seeded_and_balanced(k, d, per, seed):
    a = gen_blobs(k, d, per, 0.1, seed, min_separation=0.0)
    b = gen_blobs(k, d, per, 0.1, seed, min_separation=0.0)
    np.testing.assert_array_equal(a.features, b.features)
    np.testing.assert_array_equal(np.bincount(a.labels), np.full(k, per))


def test_blobs_separation_2d():
    ds = gen_blobs(10, 2, 100, 0.5, seed=0)
    means = np.stack([ds.features[ds.labels == c].mean(axis=0) for c in range(10)])
    std = max(ds.features[ds.labels == c].std(axis=0).max() for c in range(10))
    gaps = np.linalg.norm(means[:, None] - means[None], axis=2) + np.eye(10) * 1e9
    assert gaps.min() >= 5 * std


def test_blobs_bad_args():
    with pytest.raises(ConfigurationError):
        gen_blobs(0, 2, 1)
    with pytest.raises(ConfigurationError):
        gen_blobs(100, 1, 1, 0.5)  # cannot separate 100 anchors on a line


def test_unique_label_expand():
    ds = gen_blobs(5, 2, 1, seed=1)
    u = unique_label_expand(ds)
    np.testing.assert_array_equal(u.labels, np.arange(5))
    assert u.n_classes_present == 5
    np.testing.assert_array_equal(unique_label_expand(u).labels, u.labels)
    assert len(np.unique(unique_label_expand(gen_blobs(10, 3, 100)).labels)) == 1000


def test_dataset_invariants():
    with pytest.raises(ConfigurationError):
        LabeledDataset(np.ones((2, 2)), [0, 5], n_classes=3)
    with pytest.raises(ConfigurationError):
        LabeledDataset(np.array([[np.nan, 1.0]]), [0])
    with pytest.raises(ConfigurationError):
        LabeledDataset(np.ones((0, 2)), [])


def test_concat_and_split():
    a = gen_blobs(3, 2, 10, seed=2)
    both = concat(a, a)
    assert len(both) == 60
    tr, ev = train_eval_split(a, 0.2, seed=0)
    assert len(tr) == 24 and len(ev) == 6
    np.testing.assert_array_equal(np.bincount(ev.labels), [2, 2, 2])


def test_csv_round_trip(tmp_path):
    ds = gen_blobs(3, 4, 5, seed=9)
    p = tmp_path / "d.csv"
    save_csv(ds, p)
    back = load_csv(p)
    np.testing.assert_array_equal(back.labels, ds.labels)
    np.testing.assert_array_equal(back.features, ds.features.astype(np.float32).astype(np.float64))
    save_csv(ds, p, header=True)
    np.testing.assert_array_equal(load_csv(p, header=True).features, back.features)


def test_csv_single_row(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("2,0.5,-1.0\n")
    ds = load_csv(p)
    assert ds.labels.tolist() == [2]
    assert ds.features.tolist() == [[0.5, -1.0]]


def test_csv_errors_cite_lines(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("".join(f"0,{i},1\n" for i in range(6)) + "1,2\n")
    with pytest.raises(ParseError, match=":7:"):
        load_csv(p)
    p.write_text("0,1\n0,x\n")
    with pytest.raises(ParseError, match=":2:"):
        load_csv(p)
    p.write_text("")
    with pytest.raises(ParseError):
        load_csv(p)


def test_features_csv(tmp_path):
    p = tmp_path / "f.csv"
    p.write_text("")
    assert load_features_csv(p).shape[0] == 0
    p.write_text("1,2\n3,4\n")
    np.testing.assert_array_equal(load_features_csv(p), [[1, 2], [3, 4]])
