"""Face + ear verification with sum-rule score fusion.

Each modality is coded once against its own dictionary; per-class scores
are added without normalization and the usual SCE/SCR rule is applied to
the sum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import solver
from .dictionary import Dictionary, DictionaryError
from .features import FeatureVector
from .scoring import (Decision, MatchScore, Metric, UndefinedScoreError, decide, sce, scr,
                      unit)
from .solver import SolverConfig, SparseCode


class FusionError(ValueError):
    pass


class ModalityError(RuntimeError):
    """A per-modality solve failed; `modality` names which one."""

    def __init__(self, modality: str, cause: Exception):
        super().__init__(f"{modality}: {cause}")
        self.modality = modality
        self.cause = cause


@dataclass
class MultimodalQuery:
    face_feature: FeatureVector
    ear_feature: FeatureVector
    claimed: str
    probe_id: str = ""


@dataclass(frozen=True)
class FusedScore:
    face_score: MatchScore
    ear_score: MatchScore
    fused_value: float
    metric: Metric

    @property
    def class_id(self) -> str:
        return self.face_score.class_id

    def as_match_score(self) -> MatchScore:
        return MatchScore(self.class_id, self.metric, self.fused_value)


def code_query(dictionary: Dictionary, y, cfg: SolverConfig = SolverConfig(),
               modality: str | None = None) -> tuple[np.ndarray, SparseCode]:
    """Normalize a query and code it against the dictionary."""
    yv = unit(y)
    try:
        code = solver.solve_l1(dictionary.matrix, yv, cfg)
    except solver.SolverError as exc:
        raise ModalityError(modality or dictionary.modality, exc) from exc
    return yv, code


def score_class(dictionary: Dictionary, yv: np.ndarray, code: SparseCode,
                class_id: str, metric: Metric) -> MatchScore:
    metric = Metric(metric)
    if metric is Metric.SCE:
        return sce(dictionary, code, yv, class_id)
    if metric is Metric.SCR:
        return scr(code, dictionary, class_id)
    raise FusionError("sparse fusion supports the sce and scr metrics only")


def verify(dictionary: Dictionary, y, claimed: str, metric: Metric, threshold: float,
           cfg: SolverConfig = SolverConfig()) -> Decision:
    """Unimodal verification of a single query."""
    if claimed not in dictionary:
        raise DictionaryError(f"unknown claimed class {claimed!r}")
    yv, code = code_query(dictionary, y, cfg)
    return decide(score_class(dictionary, yv, code, claimed, metric), threshold)


def _check_pair(face_dict: Dictionary, ear_dict: Dictionary):
    if face_dict.class_ids != ear_dict.class_ids:
        raise FusionError("face and ear dictionaries enroll different classes")


def _code_both(face_dict, ear_dict, q, cfg, ear_cfg):
    _check_pair(face_dict, ear_dict)
    if q.claimed not in face_dict:
        raise DictionaryError(f"unknown claimed class {q.claimed!r}")
    yf, cf = code_query(face_dict, q.face_feature, cfg, "face")
    ye, ce = code_query(ear_dict, q.ear_feature, ear_cfg or cfg, "ear")
    return yf, cf, ye, ce


def _fuse(face_dict, ear_dict, yf, cf, ye, ce, class_id, metric) -> FusedScore:
    fs = score_class(face_dict, yf, cf, class_id, metric)
    es = score_class(ear_dict, ye, ce, class_id, metric)
    return FusedScore(fs, es, fs.value + es.value, Metric(metric))


def verify_multimodal(face_dict: Dictionary, ear_dict: Dictionary, q: MultimodalQuery,
                      metric: Metric, threshold: float,
                      cfg: SolverConfig = SolverConfig(),
                      ear_cfg: SolverConfig | None = None) -> tuple[Decision, FusedScore]:
    yf, cf, ye, ce = _code_both(face_dict, ear_dict, q, cfg, ear_cfg)
    fused = _fuse(face_dict, ear_dict, yf, cf, ye, ce, q.claimed, metric)
    return decide(fused.as_match_score(), threshold), fused


def score_all_classes_multimodal(face_dict: Dictionary, ear_dict: Dictionary,
                                 q: MultimodalQuery, metric: Metric,
                                 cfg: SolverConfig = SolverConfig(),
                                 ear_cfg: SolverConfig | None = None) -> list[FusedScore]:
    """Fused score for every enrolled class from one solve per modality.

    Raises UndefinedScoreError for SCR when either code is all zero.
    """
    yf, cf, ye, ce = _code_both(face_dict, ear_dict, q, cfg, ear_cfg)
    return [_fuse(face_dict, ear_dict, yf, cf, ye, ce, cid, metric)
            for cid in face_dict.class_ids]


def rank_fused(scores: list[FusedScore]) -> list[str]:
    """Class ids best-first: ascending fused SCE or descending fused SCR.

    Ties keep enrollment order.
    """
    if not scores:
        return []
    sign = 1.0 if scores[0].metric is Metric.SCE else -1.0
    order = sorted(range(len(scores)), key=lambda i: (sign * scores[i].fused_value, i))
    return [scores[i].class_id for i in order]


__all__ = [
    "FusedScore", "FusionError", "ModalityError", "MultimodalQuery", "UndefinedScoreError",
    "code_query", "rank_fused", "score_all_classes_multimodal", "score_class", "verify",
    "verify_multimodal",
]
