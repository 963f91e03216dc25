import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from srcverify import synth
from srcverify.dictionary import (ClassBlock, DictionaryError, build_dictionary, delta,
                                  load_dictionary, sample_classes, sample_small_dictionary,
                                  save_dictionary, subset, unit_columns)
from srcverify.features import FeatureVector


def block(cid, cols, modality="face"):
    return ClassBlock(cid, [FeatureVector(c, modality=modality, source_id=f"{cid}_{j}",
                                          subject_id=cid) for j, c in enumerate(cols)])


def small():
    return build_dictionary([
        block("a", [[3.0, 4.0], [1.0, 0.0]]),
        block("b", [[0.0, 2.0]]),
        block("c", [[1.0, 1.0], [-1.0, 1.0], [0.0, -5.0]]),
    ])


def test_layout_and_normalization():
    d = small()
    assert d.matrix.shape == (2, 6)
    assert d.class_ids == ["a", "b", "c"]
    assert list(d.column_class_map) == [0, 0, 1, 2, 2, 2]
    assert d.columns_of("c") == slice(3, 6)
    np.testing.assert_allclose(d.matrix[:, 0], [0.6, 0.8])
    np.testing.assert_allclose(np.linalg.norm(d.matrix, axis=0), 1.0)
    assert "b" in d and "z" not in d
    assert d.n_classes == 3 and d.dim == 2


def test_synthetic_gallery_shape():
    ds = synth.gen_dataset(synth.SynthParams(c=50, l=7, p=1))
    d = ds.dictionary()
    assert d.matrix.shape == (200, 350)
    assert d.n_classes == 50


def test_normalization_idempotent(rng):
    M = rng.standard_normal((5, 9))
    once = unit_columns(M)
    np.testing.assert_allclose(unit_columns(once), once, atol=1e-15)


def test_build_errors():
    with pytest.raises(DictionaryError):
        build_dictionary([])
    with pytest.raises(DictionaryError):
        build_dictionary([block("a", [[1.0, 0.0]]), block("a", [[0.0, 1.0]])])
    with pytest.raises(DictionaryError):
        build_dictionary([block("a", [[1.0, 0.0]]), block("b", [[0.0, 1.0, 2.0]])])
    with pytest.raises(DictionaryError):
        build_dictionary([block("a", [[0.0, 0.0]])])
    with pytest.raises(DictionaryError):
        ClassBlock("x", [])
    with pytest.raises(DictionaryError):
        small().columns_of("nope")


@given(st.lists(st.integers(1, 4), min_size=1, max_size=6), st.integers(0, 2**31))
def test_delta_partitions_code(sizes, seed):
    rng = np.random.default_rng(seed)
    d = build_dictionary([block(f"k{i}", rng.standard_normal((n, 3)) + 0.1)
                          for i, n in enumerate(sizes)])
    x = rng.standard_normal(d.n_columns)
    parts = [delta(x, d, cid) for cid in d.class_ids]
    np.testing.assert_array_equal(np.sum(parts, axis=0), x)
    for cid, part in zip(d.class_ids, parts):
        outside = np.ones(d.n_columns, bool)
        outside[d.columns_of(cid)] = False
        assert not np.any(part[outside])


def test_delta_length_check():
    with pytest.raises(DictionaryError):
        delta(np.zeros(5), small(), "a")


def test_subset_keeps_order():
    d = small()
    s = subset(d, ["c", "a"])
    assert s.class_ids == ["a", "c"]
    np.testing.assert_array_equal(s.matrix, d.matrix[:, [0, 1, 3, 4, 5]])
    with pytest.raises(DictionaryError):
        subset(d, ["q"])


def test_sample_classes_always_has_claimed():
    ids = [f"s{i}" for i in range(10)]
    rng = np.random.default_rng(0)
    for _ in range(200):
        got = sample_classes(ids, "s3", 5, rng)
        assert "s3" in got and len(got) == 5 == len(set(got))
        assert got == [c for c in ids if c in got]


def test_sample_classes_marginals():
    # each non-claimed class appears with probability (k-1)/(c-1) = 4/9
    ids = [f"s{i}" for i in range(10)]
    hits = np.zeros(10)
    for seed in range(10000):
        got = sample_classes(ids, "s0", 5, np.random.default_rng(seed))
        for c in got:
            hits[ids.index(c)] += 1
    assert hits[0] == 10000
    np.testing.assert_allclose(hits[1:] / 10000, 4 / 9, atol=0.02)


def test_sample_errors():
    ids = ["a", "b", "c"]
    rng = np.random.default_rng(0)
    with pytest.raises(DictionaryError):
        sample_classes(ids, "z", 2, rng)
    with pytest.raises(DictionaryError):
        sample_classes(ids, "a", 0, rng)
    with pytest.raises(DictionaryError):
        sample_classes(ids, "a", 4, rng)


def test_sample_small_dictionary_deterministic():
    d = synth.gen_dataset(synth.SynthParams(c=12, p=1)).dictionary()
    a = sample_small_dictionary(d, "s004", 5, [1, 2, 3])
    b = sample_small_dictionary(d, "s004", 5, [1, 2, 3])
    assert a.class_ids == b.class_ids and "s004" in a
    np.testing.assert_array_equal(a.matrix, b.matrix)
    assert sample_small_dictionary(d, "s004", 12, 0).class_ids == d.class_ids


def test_save_load_roundtrip(tmp_path):
    d = synth.gen_dataset(synth.SynthParams(c=4, l=3, p=1, dim=6)).dictionary()
    save_dictionary(d, tmp_path / "d.csv", tmp_path / "d.json")
    back = load_dictionary(tmp_path / "d.csv", tmp_path / "d.json")
    assert back.class_ids == d.class_ids
    # columns are renormalized on load, so allow one-ulp drift
    np.testing.assert_allclose(back.matrix, d.matrix, rtol=0, atol=1e-15)


def test_load_manifest_mismatch(tmp_path):
    d = small()
    save_dictionary(d, tmp_path / "d.csv", tmp_path / "d.json")
    text = (tmp_path / "d.json").read_text().replace('"dimension": 2', '"dimension": 3')
    (tmp_path / "d.json").write_text(text)
    with pytest.raises(DictionaryError):
        load_dictionary(tmp_path / "d.csv", tmp_path / "d.json")
