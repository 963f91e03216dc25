import numpy as np
import pytest

from srcverify import solver, synth
from srcverify.dictionary import DictionaryError, subset
from srcverify.fusion import (FusionError, ModalityError, MultimodalQuery, code_query,
                              rank_fused, score_all_classes_multimodal, score_class, verify,
                              verify_multimodal)
from srcverify.scoring import Metric, sce, scr, unit


@pytest.fixture(scope="module")
def paired():
    ds = synth.md_shape(6, 2, 2, l=4, dim=30, seed=11)
    face, ear = ds.dictionaries()
    return ds, face, ear


def test_sum_rule(paired):
    ds, face, ear = paired
    q = ds.probes[0]
    for metric in (Metric.SCE, Metric.SCR):
        dec, fused = verify_multimodal(face, ear, q, metric, 0.5)
        yf, cf = code_query(face, q.face_feature)
        ye, ce = code_query(ear, q.ear_feature)
        f = score_class(face, yf, cf, q.claimed, metric).value
        e = score_class(ear, ye, ce, q.claimed, metric).value
        assert fused.face_score.value == pytest.approx(f, abs=1e-12)
        assert fused.ear_score.value == pytest.approx(e, abs=1e-12)
        assert fused.fused_value == fused.face_score.value + fused.ear_score.value
        assert dec.score.value == fused.fused_value and dec.score.class_id == q.claimed


def test_exactly_two_solves(paired, monkeypatch):
    ds, face, ear = paired
    calls = []
    real = solver.solve_l1

    def counting(A, y, cfg=solver.SolverConfig()):
        calls.append(A.shape)
        return real(A, y, cfg)

    monkeypatch.setattr(solver, "solve_l1", counting)
    verify_multimodal(face, ear, ds.probes[1], Metric.SCE, 1.0)
    assert len(calls) == 2
    calls.clear()
    score_all_classes_multimodal(face, ear, ds.probes[1], Metric.SCR)
    assert len(calls) == 2


def test_fused_scr_sums_to_two(paired):
    ds, face, ear = paired
    scores = score_all_classes_multimodal(face, ear, ds.probes[2], Metric.SCR)
    assert sum(s.fused_value for s in scores) == pytest.approx(2.0, abs=1e-12)
    assert all(0 <= s.fused_value <= 2 for s in scores)


def test_claimed_entry_matches_all_classes(paired):
    ds, face, ear = paired
    q = ds.probes[3]
    _, fused = verify_multimodal(face, ear, q, Metric.SCE, 1.0)
    allc = score_all_classes_multimodal(face, ear, q, Metric.SCE)
    entry = next(s for s in allc if s.class_id == q.claimed)
    assert entry.fused_value == fused.fused_value


def test_rank_fused(paired):
    ds, face, ear = paired
    q = ds.probes[0]
    sce_scores = score_all_classes_multimodal(face, ear, q, Metric.SCE)
    order = rank_fused(sce_scores)
    vals = {s.class_id: s.fused_value for s in sce_scores}
    assert [vals[c] for c in order] == sorted(vals.values())
    scr_scores = score_all_classes_multimodal(face, ear, q, Metric.SCR)
    vals = {s.class_id: s.fused_value for s in scr_scores}
    assert [vals[c] for c in rank_fused(scr_scores)] == sorted(vals.values(), reverse=True)
    assert rank_fused([]) == []


def test_dropping_a_modality_recovers_unimodal(paired):
    # fused minus the ear part equals the face-only score
    ds, face, ear = paired
    q = ds.probes[4]
    _, fused = verify_multimodal(face, ear, q, Metric.SCE, 1.0)
    yf, cf = code_query(face, q.face_feature)
    assert fused.fused_value - fused.ear_score.value == pytest.approx(
        sce(face, cf, yf, q.claimed).value, abs=1e-12)
    dec = verify(face, q.face_feature, q.claimed, Metric.SCR, 0.0)
    assert dec.score.value == pytest.approx(scr(cf, face, q.claimed).value, abs=1e-12)


def test_class_mismatch(paired):
    ds, face, ear = paired
    smaller = subset(ear, ear.class_ids[:-1])
    with pytest.raises(FusionError):
        verify_multimodal(face, smaller, ds.probes[0], Metric.SCE, 1.0)
    q = MultimodalQuery(ds.probes[0].face_feature, ds.probes[0].ear_feature, "nobody")
    with pytest.raises(DictionaryError):
        verify_multimodal(face, ear, q, Metric.SCE, 1.0)
    with pytest.raises(FusionError):
        verify_multimodal(face, ear, ds.probes[0], Metric.COSINE, 1.0)


def test_modality_tagged_error(paired, monkeypatch):
    ds, face, ear = paired
    real = solver.solve_l1

    def failing(A, y, cfg=solver.SolverConfig()):
        if A is ear.matrix:
            raise solver.SolverError("boom")
        return real(A, y, cfg)

    monkeypatch.setattr(solver, "solve_l1", failing)
    with pytest.raises(ModalityError) as info:
        verify_multimodal(face, ear, ds.probes[0], Metric.SCE, 1.0)
    assert info.value.modality == "ear"


def test_unit_query_scale_invariant(paired):
    ds, face, _ = paired
    y = ds.face_probes[0]
    a = verify(face, y.values, y.subject_id, Metric.SCE, 1.0).score.value
    b = verify(face, 7.5 * y.values, y.subject_id, Metric.SCE, 1.0).score.value
    assert a == pytest.approx(b, abs=1e-9)
    np.testing.assert_allclose(np.linalg.norm(unit(y)), 1.0)
