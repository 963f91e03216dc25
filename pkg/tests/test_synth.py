import numpy as np
import pytest

from srcverify import synth
from srcverify.evaluation import evaluate_unimodal
from srcverify.scoring import Metric
from srcverify.synth import SynthError, SynthParams, gen_dataset


def test_shapes_and_unit_norms():
    ds = gen_dataset(SynthParams(c=5, l=4, p=3, dim=16))
    assert len(ds.gallery) == 5 and len(ds.probes) == 15
    assert all(len(b.samples) == 4 for b in ds.gallery)
    for b in ds.gallery:
        for s in b.samples:
            assert s.dim == 16 and np.linalg.norm(s.values) == pytest.approx(1.0)
            assert s.subject_id == b.class_id
    assert [len(ds.probes_of(c)) for c in ds.class_ids] == [3] * 5


def test_deterministic():
    a = gen_dataset(SynthParams(c=4, seed=17))
    b = gen_dataset(SynthParams(c=4, seed=17))
    c = gen_dataset(SynthParams(c=4, seed=18))
    np.testing.assert_array_equal(a.dictionary().matrix, b.dictionary().matrix)
    assert not np.array_equal(a.dictionary().matrix, c.dictionary().matrix)


def test_zero_noise_is_perfect():
    ds = gen_dataset(SynthParams(c=10, l=3, p=2, dim=50, within_spread=0.0, seed=1))
    rep = evaluate_unimodal(ds.dictionary(), ds.probes, Metric.SCE)
    assert rep.rank_one == 1.0
    assert rep.eer == 0.0


def test_within_spread_rescales_same_noise():
    base, lo, hi = (gen_dataset(SynthParams(c=3, l=2, p=1, dim=8, within_spread=w, seed=5))
                    for w in (0.0, 0.1, 0.4))
    # zero-noise samples are the centers; the off-center direction is the same draw
    for b0, b1, b2 in zip(base.gallery, lo.gallery, hi.gallery):
        c = b0.matrix[:, 0]
        np.testing.assert_allclose(b0.matrix[:, 1], c, atol=1e-15)
        for j in range(2):
            u = b1.matrix[:, j] - (b1.matrix[:, j] @ c) * c
            v = b2.matrix[:, j] - (b2.matrix[:, j] @ c) * c
            np.testing.assert_allclose(u / np.linalg.norm(u), v / np.linalg.norm(v),
                                       atol=1e-12)


def test_param_errors():
    for bad in ({"c": 0}, {"l": -1}, {"p": 0}, {"dim": 0}, {"within_spread": -0.1},
                {"between_spread": np.nan}, {"c": 2.5}):
        with pytest.raises(SynthError):
            SynthParams(**bad)


def test_pairing_counts():
    md1 = synth.md1_like()
    md2 = synth.md2_like()
    assert len(md1.probes) == 4400 and len(md1.class_ids) == 50
    assert len(md2.probes) == 6083 and len(md2.class_ids) == 79
    face, ear = md2.dictionaries()
    assert face.matrix.shape == ear.matrix.shape == (200, 553)
    one = synth.md_shape(1, 1, 1, l=2, dim=5)
    assert len(one.probes) == 1
    q = md1.probes[0]
    assert q.face_feature.subject_id == q.ear_feature.subject_id == q.claimed


def test_pairing_is_a_bijection():
    pd = synth.md_shape(12, 1, 1, l=2, dim=6, seed=3)
    ears = [e for _, e in pd.pairing.values()]
    assert len(set(ears)) == 12
    assert synth.md_shape(12, 1, 1, l=2, dim=6, seed=3).pairing == pd.pairing


def test_pair_errors():
    ds = gen_dataset(SynthParams(c=2, l=2, p=1, dim=4))
    with pytest.raises(SynthError):
        synth.pair_multimodal(synth.Dataset([], []), ds, 0)


def test_within_spread_knob_raises_eer():
    # more within-class noise gives a worse EER on most seeds
    def eer(w, seed):
        ds = gen_dataset(SynthParams(c=10, l=5, p=3, dim=40, within_spread=w, seed=seed))
        return evaluate_unimodal(ds.dictionary(), ds.probes).eer

    wins = sum(eer(0.2, seed) < eer(0.8, seed) for seed in range(1, 6))
    assert wins >= 4


def test_save_load_roundtrip(tmp_path):
    pd = synth.md_shape(4, 2, 3, l=3, dim=10, seed=6)
    files = synth.save_paired(pd, tmp_path, {"seed": 6})
    assert {f.name for f in files} == {"face_gallery.csv", "face_probes.csv", "ear_gallery.csv",
                                       "ear_probes.csv", "manifest.json"}
    back = synth.load_paired(tmp_path)
    assert back.class_ids == pd.class_ids and back.pairing == pd.pairing
    assert len(back.probes) == len(pd.probes) == 24
    for a, b in zip(back.dictionaries(), pd.dictionaries()):
        np.testing.assert_allclose(a.matrix, b.matrix, rtol=0, atol=1e-15)
    with pytest.raises(SynthError):
        synth.load_paired(tmp_path / "missing")
