"""Match scores (SCE, SCR, cosine) and threshold decisions."""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .dictionary import ClassBlock, Dictionary, delta
from .features import format_float


class Metric(str, enum.Enum):
    SCE = "sce"
    SCR = "scr"
    COSINE = "cosine"

    @property
    def polarity(self) -> str:
        return "distance" if self is Metric.SCE else "similarity"


class UndefinedScoreError(ArithmeticError):
    """SCR of an all-zero code (0/0)."""


class ScoringError(ValueError):
    pass


@dataclass(frozen=True)
class MatchScore:
    class_id: str
    metric: Metric
    value: float

    @property
    def polarity(self) -> str:
        return self.metric.polarity


@dataclass(frozen=True)
class Decision:
    accept: bool
    threshold: float
    score: MatchScore

    @property
    def outcome(self) -> str:
        return "accept" if self.accept else "reject"


def unit(values) -> np.ndarray:
    """Unit-L2 copy of a query vector (queries are coded normalized)."""
    v = np.asarray(getattr(values, "values", values), dtype=float)
    n = np.linalg.norm(v)
    if n == 0:
        raise ScoringError("zero-norm query")
    return v / n


def sce(dictionary: Dictionary, code, y, class_id: str) -> MatchScore:
    """Residual ||y - A_i delta_i(a)|| using only class_id's coefficients."""
    y = np.asarray(getattr(y, "values", y), dtype=float)
    masked = delta(code, dictionary, class_id)
    sl = dictionary.columns_of(class_id)
    r = y - dictionary.matrix[:, sl] @ masked[sl]
    return MatchScore(class_id, Metric.SCE, float(np.linalg.norm(r)))


def scr(code, dictionary: Dictionary, class_id: str) -> MatchScore:
    """Share of the code's L1 mass carried by class_id."""
    coef = np.asarray(getattr(code, "coefficients", code), dtype=float)
    total = np.abs(coef).sum()
    if total == 0:
        raise UndefinedScoreError("SCR undefined for an all-zero code")
    part = np.abs(delta(coef, dictionary, class_id)).sum()
    return MatchScore(class_id, Metric.SCR, float(part / total))


def _check_metric(score: MatchScore, metric: Metric):
    if score.metric is not metric:
        raise ScoringError(f"expected a {metric.value} score, got {score.metric.value}")


def decide_sce(score: MatchScore, threshold: float) -> Decision:
    _check_metric(score, Metric.SCE)
    return Decision(score.value <= threshold, threshold, score)


def decide_scr(score: MatchScore, threshold: float) -> Decision:
    _check_metric(score, Metric.SCR)
    return Decision(score.value > threshold, threshold, score)


def decide_cosine(score: MatchScore, threshold: float) -> Decision:
    _check_metric(score, Metric.COSINE)
    return Decision(score.value > threshold, threshold, score)


def decide(score: MatchScore, threshold: float) -> Decision:
    rule = {Metric.SCE: decide_sce, Metric.SCR: decide_scr,
            Metric.COSINE: decide_cosine}[score.metric]
    return rule(score, threshold)


def accepts(value, threshold, polarity: str):
    """Vectorized accept rule: <= for distances, > for similarities."""
    value = np.asarray(value)
    return value <= threshold if polarity == "distance" else value > threshold


def cosine_best_match(y, block: ClassBlock) -> MatchScore:
    """Best cosine similarity between y and any of the block's samples."""
    yv = unit(y)
    M = block.matrix
    norms = np.linalg.norm(M, axis=0)
    if np.any(norms == 0):
        raise ScoringError("zero-norm training sample")
    sims = np.clip(yv @ (M / norms), -1.0, 1.0)
    return MatchScore(block.class_id, Metric.COSINE, float(sims.max()))


# ---------------------------------------------------------------------------
# batched scoring: probes as columns of Y, codes as columns of X

def sce_matrix(dictionary: Dictionary, Y: np.ndarray, X: np.ndarray) -> np.ndarray:
    """(P, c) SCE of every probe against every class."""
    out = np.empty((Y.shape[1], dictionary.n_classes))
    for i, cid in enumerate(dictionary.class_ids):
        sl = dictionary.columns_of(cid)
        out[:, i] = np.linalg.norm(Y - dictionary.matrix[:, sl] @ X[sl], axis=0)
    return out


def scr_matrix(dictionary: Dictionary, X: np.ndarray) -> np.ndarray:
    """(P, c) SCR values; rows of all-zero codes are NaN (undefined)."""
    absx = np.abs(X)
    per_class = np.stack([absx[dictionary.columns_of(cid)].sum(axis=0)
                          for cid in dictionary.class_ids], axis=1)
    total = absx.sum(axis=0)
    out = np.full_like(per_class, np.nan)
    ok = total > 0
    out[ok] = per_class[ok] / total[ok, None]
    return out


def cosine_matrix(dictionary: Dictionary, Y: np.ndarray) -> np.ndarray:
    """(P, c) best-match cosine; dictionary columns are already unit norm."""
    Yn = Y / np.linalg.norm(Y, axis=0)
    sims = np.clip(Yn.T @ dictionary.matrix, -1.0, 1.0)
    return np.stack([sims[:, dictionary.columns_of(cid)].max(axis=1)
                     for cid in dictionary.class_ids], axis=1)


# ---------------------------------------------------------------------------
# score dump

DUMP_HEADER = ["probe_id", "claimed_class", "true_class", "metric", "value",
               "is_genuine", "modality"]


@dataclass(frozen=True)
class ScoreRecord:
    probe_id: str
    claimed_class: str
    true_class: str
    metric: Metric
    value: float
    modality: str

    @property
    def is_genuine(self) -> bool:
        return self.claimed_class == self.true_class


def write_score_dump(path_or_buf, records: Iterable[ScoreRecord]) -> None:
    own = not hasattr(path_or_buf, "write")
    fh = open(path_or_buf, "w", newline="", encoding="utf-8") if own else path_or_buf
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DUMP_HEADER)
        for r in records:
            w.writerow([r.probe_id, r.claimed_class, r.true_class, r.metric.value,
                        format_float(r.value), int(r.is_genuine), r.modality])
    finally:
        if own:
            fh.close()


def read_score_dump(path_or_buf) -> list[ScoreRecord]:
    own = not hasattr(path_or_buf, "read")
    fh = open(path_or_buf, newline="", encoding="utf-8") if own else path_or_buf
    try:
        rows = list(csv.reader(fh))
    finally:
        if own:
            fh.close()
    if not rows or rows[0] != DUMP_HEADER:
        raise ScoringError("not a score dump")
    out = []
    for row in rows[1:]:
        rec = ScoreRecord(row[0], row[1], row[2], Metric(row[3]), float(row[4]), row[6])
        if int(row[5]) != int(rec.is_genuine):
            raise ScoringError(f"inconsistent is_genuine flag for probe {row[0]!r}")
        out.append(rec)
    return out
