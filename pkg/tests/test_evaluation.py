import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from srcverify import synth
from srcverify.evaluation import (Cmc, EvaluationError, RocPoint, ScoreSet,
                                  benchmark_verification, cmc_from_matrix, compute_cmc, compute_eer, compute_roc, eer_of,
                                  evaluate_multimodal_metrics, evaluate_unimodal,
                                  histogram_scores, identify, small_dictionary_scores,
                                  small_dictionary_scores_multimodal, split_scores, sweep_scales,
                                  write_report)
from srcverify.scoring import Metric


def brute_roc(gen, imp, polarity):
    """Threshold-by-threshold FAR/FRR with plain Python comparisons."""
    thr = [-np.inf] + sorted(set(gen) | set(imp)) + [np.inf]
    if polarity == "distance":
        ok = lambda v, t: v <= t  # noqa: E731
    else:
        ok = lambda v, t: v > t  # noqa: E731
    far = [sum(ok(v, t) for v in imp) / len(imp) for t in thr]
    frr = [sum(not ok(v, t) for v in gen) / len(gen) for t in thr]
    return thr, far, frr


def brute_eer(far, frr):
    d = [a - b for a, b in zip(far, frr)]
    for i, v in enumerate(d):
        if v == 0:
            return far[i]
    for i in range(len(d) - 1):
        if (d[i] > 0) != (d[i + 1] > 0):
            t = d[i] / (d[i] - d[i + 1])
            return far[i] + t * (far[i + 1] - far[i])
    raise AssertionError("no crossing")


scores = st.lists(st.integers(0, 30).map(lambda v: v / 10), min_size=1, max_size=25)


@given(scores, scores, st.sampled_from(["distance", "similarity"]))
def test_roc_and_eer_match_brute_force(gen, imp, polarity):
    s = ScoreSet(gen, imp, polarity)
    roc = compute_roc(s)
    thr, far, frr = brute_roc(gen, imp, polarity)
    np.testing.assert_array_equal(roc.thresholds, thr)
    np.testing.assert_allclose(roc.far, far, atol=1e-12)
    np.testing.assert_allclose(roc.frr, frr, atol=1e-12)
    assert compute_eer(roc) == pytest.approx(brute_eer(far, frr), abs=1e-12)
    assert 0 <= compute_eer(roc) <= 1


@given(scores, scores, st.sampled_from(["distance", "similarity"]))
def test_roc_monotone(gen, imp, polarity):
    roc = compute_roc(ScoreSet(gen, imp, polarity))
    if polarity == "distance":
        assert np.all(np.diff(roc.far) >= 0) and np.all(np.diff(roc.frr) <= 0)
    else:
        assert np.all(np.diff(roc.far) <= 0) and np.all(np.diff(roc.frr) >= 0)


def test_eer_extremes():
    assert eer_of(ScoreSet([0.1, 0.2], [0.5, 0.9], "distance")) == 0.0
    assert eer_of(ScoreSet([0.9, 0.8], [0.1, 0.2], "similarity")) == 0.0
    assert eer_of(ScoreSet([0.3] * 4, [0.3] * 6, "distance")) == pytest.approx(0.5)
    assert eer_of(ScoreSet([0.9, 1.0], [0.1, 0.2], "distance")) == pytest.approx(1.0)


def test_eer_from_point_list():
    pts = [RocPoint(0, 0.0, 1.0), RocPoint(1, 0.4, 0.2), RocPoint(2, 1.0, 0.0)]
    # d goes -1 -> 0.2; crossing at t = 1/1.2 of the way
    assert compute_eer(pts) == pytest.approx(0.4 / 1.2)
    with pytest.raises(EvaluationError):
        compute_eer([])


def test_scoreset_validation():
    with pytest.raises(EvaluationError):
        ScoreSet([0.1], [np.nan], "distance")
    with pytest.raises(EvaluationError):
        ScoreSet([0.1], [0.2], "up")
    with pytest.raises(EvaluationError):
        compute_roc(ScoreSet([], [0.2], "distance"))


def test_cmc_examples():
    rk = [["a", "b", "c"], ["b", "a", "c"], ["c", "b", "a"], ["a", "c", "b"]]
    cmc = compute_cmc(rk, ["a", "a", "a", "b"])
    np.testing.assert_allclose(cmc.rates, [0.25, 0.5, 1.0])
    assert cmc.rank_one == 0.25 and cmc(3) == 1.0 and cmc(10) == 1.0
    with pytest.raises(EvaluationError):
        compute_cmc(rk, ["a"])


def test_cmc_from_matrix_ties_keep_order():
    M = np.array([[0.5, 0.5, 0.9], [0.2, 0.1, 0.3]])
    cmc = cmc_from_matrix(M, np.array([1, 1]), Metric.SCE)
    np.testing.assert_allclose(cmc.rates, [0.5, 1.0, 1.0])
    cmc = cmc_from_matrix(M, np.array([2, 0]), Metric.SCR)
    np.testing.assert_allclose(cmc.rates, [0.5, 1.0, 1.0])
    assert isinstance(cmc, Cmc)


def test_histogram_masses():
    s = ScoreSet([0.0, 0.1, 0.9], [0.5, 0.5, 1.0, 1.0], "distance")
    h = histogram_scores(s, bins=2, range=(0.0, 1.0))
    np.testing.assert_allclose(h.genuine, [2 / 3, 1 / 3])
    np.testing.assert_allclose(h.imposter, [0.0, 1.0])
    assert h.genuine.sum() == pytest.approx(1) and h.edges.size == 3
    with pytest.raises(EvaluationError):
        histogram_scores(s, bins=0)


def test_benchmark():
    calls = []
    stats = benchmark_verification(calls.append, [1, 2, 3], repetitions=2)
    assert stats.n == 6 and len(calls) == 7  # one warm-up call
    assert stats.mean >= 0 and stats.median >= 0
    with pytest.raises(EvaluationError):
        benchmark_verification(calls.append, [])


@pytest.mark.parametrize("P,c", [(4400, 50), (6083, 79)])
def test_split_counts(P, c):
    rng = np.random.default_rng(P)
    M = rng.random((P, c))
    truth = rng.integers(0, c, P)
    s, undefined = split_scores(M, truth, Metric.SCE)
    assert s.genuine.size == P and s.imposter.size == P * (c - 1) and undefined == 0
    np.testing.assert_array_equal(s.genuine, M[np.arange(P), truth])
    M[0, :] = np.nan
    s, undefined = split_scores(M, truth, Metric.SCR)
    assert undefined == c and s.genuine.size == P - 1


def test_single_probe_two_classes():
    ds = synth.gen_dataset(synth.SynthParams(c=2, l=3, p=1, dim=10, seed=4))
    rep = evaluate_unimodal(ds.dictionary(), ds.probes[:1])
    assert rep.scores.genuine.size == 1 and rep.scores.imposter.size == 1
    assert 0 <= rep.eer <= 1


def test_identify_tiny():
    ds = synth.gen_dataset(synth.SynthParams(c=4, l=4, p=1, dim=30, within_spread=0.05,
                                             seed=2))
    d = ds.dictionary()
    for p in ds.probes:
        ranking = identify(d, p)
        assert ranking[0] == p.subject_id and sorted(ranking) == sorted(d.class_ids)


def test_small_dictionary_counts():
    ds = synth.gen_dataset(synth.SynthParams(c=8, l=3, p=2, dim=20, seed=5))
    d = ds.dictionary()
    for k in (2, 5, 8):
        s = small_dictionary_scores(d, ds.probes, k, trial=1, seed=9)
        assert s.genuine.size == 16 and s.imposter.size == 16 * (k - 1)
    a = small_dictionary_scores(d, ds.probes, 4, trial=3, seed=9)
    b = small_dictionary_scores(d, ds.probes, 4, trial=3, seed=9)
    np.testing.assert_array_equal(a.imposter, b.imposter)
    with pytest.raises(EvaluationError):
        small_dictionary_scores(d, ds.probes, 9, trial=0, seed=0)


def test_small_multimodal_counts_and_full_scale():
    pd = synth.md_shape(6, 2, 3, l=3, dim=20, seed=8)
    face, ear = pd.dictionaries()
    s = small_dictionary_scores_multimodal(face, ear, pd.probes, 3, 0, 1)
    n = len(pd.probes)
    assert n == 36 and s.genuine.size == n and s.imposter.size == 2 * n
    summ = sweep_scales([6], 4, lambda k, r: small_dictionary_scores_multimodal(
        face, ear, pd.probes, k, r, 1), full=6)[0]
    assert summ.spread == 0.0 and len(summ.eers) == 4


def test_sweep_spread_format():
    sets = {0: ScoreSet([0.1], [0.2], "distance"), 1: ScoreSet([0.3], [0.2], "distance")}
    summ = sweep_scales([5], 2, lambda k, r: sets[r])[0]
    assert summ.eers == [0.0, 1.0]
    assert summ.mean == 0.5 and summ.spread == 0.5
    assert summ.formatted() == "50.00 (± 50.00)"
    with pytest.raises(EvaluationError):
        sweep_scales([5], 0, lambda k, r: sets[0])


def test_multimodal_reports(tmp_path):
    pd = synth.md_shape(5, 2, 2, l=3, dim=20, seed=3)
    face, ear = pd.dictionaries()
    res = evaluate_multimodal_metrics(face, ear, pd.probes, [Metric.SCE, Metric.SCR],
                                      keep_records=True)
    for metric, reps in res.items():
        assert reps["face"].scores.genuine.size == 10
        assert reps["ear"].scores.genuine.size == 10
        assert reps["fused"].scores.genuine.size == 20
        assert reps["fused"].scores.imposter.size == 80
        assert len(reps["fused"].records) == 100
    files = write_report(res[Metric.SCE]["fused"], tmp_path, "x", hist_bins=5)
    assert all(f.exists() for f in files)
    assert len((tmp_path / "x_hist.csv").read_text().splitlines()) == 6
