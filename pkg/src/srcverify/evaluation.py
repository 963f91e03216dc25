"""Verification and identification protocol: scores, ROC/EER, CMC, runtimes.

Every probe is coded once; its score against the true class is genuine and
its scores against every other class in the coding dictionary are
imposters. Rankings from the same score matrix give the CMC curve.
"""

from __future__ import annotations

import csv
import json
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import solver
from .dictionary import Dictionary, DictionaryError, sample_classes, subset
from .features import FeatureVector, format_float
from .fusion import MultimodalQuery
from .scoring import Metric, ScoreRecord, cosine_matrix, sce_matrix, scr_matrix
from .solver import SolverConfig


class EvaluationError(ValueError):
    pass


@dataclass
class ScoreSet:
    genuine: np.ndarray
    imposter: np.ndarray
    polarity: str  # "distance" or "similarity"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.genuine = np.asarray(self.genuine, dtype=float).ravel()
        self.imposter = np.asarray(self.imposter, dtype=float).ravel()
        if self.polarity not in ("distance", "similarity"):
            raise EvaluationError(f"unknown polarity {self.polarity!r}")
        if not (np.all(np.isfinite(self.genuine)) and np.all(np.isfinite(self.imposter))):
            raise EvaluationError("scores must be finite")

    def require_nonempty(self):
        if self.genuine.size == 0 or self.imposter.size == 0:
            raise EvaluationError("need at least one genuine and one imposter score")


@dataclass(frozen=True)
class RocPoint:
    threshold: float
    far: float
    frr: float


@dataclass
class Roc:
    """FAR/FRR over ascending thresholds (every distinct score plus +-inf)."""

    thresholds: np.ndarray
    far: np.ndarray
    frr: np.ndarray
    polarity: str

    def points(self) -> list[RocPoint]:
        return [RocPoint(float(t), float(a), float(r))
                for t, a, r in zip(self.thresholds, self.far, self.frr)]

    def __len__(self):
        return self.thresholds.size


def compute_roc(s: ScoreSet) -> Roc:
    s.require_nonempty()
    thr = np.concatenate(([-np.inf], np.unique(np.concatenate((s.genuine, s.imposter))),
                          [np.inf]))
    g = np.sort(s.genuine)
    im = np.sort(s.imposter)
    # number of scores <= each threshold
    g_le = np.searchsorted(g, thr, side="right")
    i_le = np.searchsorted(im, thr, side="right")
    if s.polarity == "distance":
        far = i_le / im.size  # imposters accepted: score <= t
        frr = (g.size - g_le) / g.size  # genuines rejected: score > t
    else:
        far = (im.size - i_le) / im.size  # imposters accepted: score > t
        frr = g_le / g.size  # genuines rejected: score <= t
    return Roc(thr, far, frr, s.polarity)


def compute_eer(roc: Roc | Sequence[RocPoint]) -> float:
    """Rate where FAR = FRR.

    An exact tie point is returned as is; otherwise FAR - FRR is linearly
    interpolated between the first pair of neighbours that bracket zero.
    """
    if isinstance(roc, Roc):
        far, frr = roc.far, roc.frr
    else:
        far = np.array([p.far for p in roc], dtype=float)
        frr = np.array([p.frr for p in roc], dtype=float)
    if far.size == 0:
        raise EvaluationError("empty ROC")
    d = far - frr
    tie = np.flatnonzero(d == 0)
    if tie.size:
        return float(far[tie[0]])
    cross = np.flatnonzero(np.sign(d[:-1]) != np.sign(d[1:]))
    if cross.size == 0:
        # no crossing: the closest approach is the best available estimate
        i = int(np.argmin(np.abs(d)))
        return float(0.5 * (far[i] + frr[i]))
    i = int(cross[0])
    t = d[i] / (d[i] - d[i + 1])
    return float(far[i] + t * (far[i + 1] - far[i]))


def eer_of(s: ScoreSet) -> float:
    return compute_eer(compute_roc(s))


# ---------------------------------------------------------------------------
# identification

def rank_order(M: np.ndarray, metric: Metric) -> np.ndarray:
    """Column indices best-first per row; ties keep enrollment order."""
    key = M if Metric(metric) is Metric.SCE else -M
    key = np.where(np.isnan(key), np.inf, key)
    return np.argsort(key, axis=1, kind="stable")


def identify(dictionary: Dictionary, y, metric: Metric = Metric.SCE,
             cfg: SolverConfig = SolverConfig()) -> list[str]:
    """All enrolled classes ordered best match first."""
    Y = _stack([y])
    M, _ = score_matrix(dictionary, Y, metric, cfg)
    return [dictionary.class_ids[i] for i in rank_order(M, metric)[0]]


@dataclass
class Cmc:
    rates: np.ndarray  # rates[r-1] = fraction identified within rank r

    @property
    def rank_one(self) -> float:
        return float(self.rates[0]) if self.rates.size else 0.0

    def __call__(self, r: int) -> float:
        return float(self.rates[min(r, self.rates.size) - 1])


def compute_cmc(rankings: Sequence[Sequence[str]], true_classes: Sequence[str]) -> Cmc:
    if len(rankings) != len(true_classes):
        raise EvaluationError(
            f"{len(rankings)} rankings for {len(true_classes)} true labels")
    if not rankings:
        raise EvaluationError("no rankings")
    depth = max(len(r) for r in rankings)
    hits = np.zeros(depth)
    for ranking, truth in zip(rankings, true_classes):
        ranking = list(ranking)
        if truth in ranking:
            hits[ranking.index(truth)] += 1
    return Cmc(np.cumsum(hits) / len(rankings))


def cmc_from_matrix(M: np.ndarray, true_idx: np.ndarray, metric: Metric) -> Cmc:
    order = rank_order(M, metric)
    pos = np.argmax(order == np.asarray(true_idx)[:, None], axis=1)
    hits = np.bincount(pos, minlength=M.shape[1])
    return Cmc(np.cumsum(hits) / M.shape[0])


# ---------------------------------------------------------------------------
# histograms

@dataclass
class Histogram:
    edges: np.ndarray
    genuine: np.ndarray
    imposter: np.ndarray


def histogram_scores(s: ScoreSet, bins: int = 50, range: tuple[float, float] | None = None
                     ) -> Histogram:
    """Per-class normalized bin masses over shared edges."""
    if bins < 1:
        raise EvaluationError("bins must be >= 1")
    if range is None:
        both = np.concatenate((s.genuine, s.imposter))
        if both.size == 0:
            raise EvaluationError("no scores to bin")
        range = (float(both.min()), float(both.max()))
        if range[0] == range[1]:
            range = (range[0] - 0.5, range[1] + 0.5)
    edges = np.linspace(range[0], range[1], bins + 1)

    def mass(v):
        if v.size == 0:
            return np.zeros(bins)
        counts, _ = np.histogram(v, bins=edges)
        return counts / v.size

    return Histogram(edges, mass(s.genuine), mass(s.imposter))


# ---------------------------------------------------------------------------
# runtime

@dataclass(frozen=True)
class RuntimeStats:
    mean: float
    median: float
    std: float
    n: int

    def to_dict(self):
        return {"mean_s": self.mean, "median_s": self.median, "std_s": self.std, "n": self.n}


def benchmark_verification(pipeline: Callable, probes: Sequence, repetitions: int = 1
                           ) -> RuntimeStats:
    """Wall-clock seconds per call of ``pipeline(probe)``, run sequentially.

    The first probe is run once untimed to warm up caches and compiled code.
    """
    if not probes:
        raise EvaluationError("empty probe set")
    if repetitions < 1:
        raise EvaluationError("repetitions must be >= 1")
    pipeline(probes[0])
    times = []
    for _ in range(repetitions):
        for q in probes:
            t0 = time.perf_counter()
            pipeline(q)
            times.append(time.perf_counter() - t0)
    return RuntimeStats(statistics.fmean(times), statistics.median(times),
                        statistics.pstdev(times), len(times))


# ---------------------------------------------------------------------------
# score matrices

def _stack(vectors) -> np.ndarray:
    cols = [np.asarray(getattr(v, "values", v), dtype=float) for v in vectors]
    Y = np.column_stack(cols)
    n = np.linalg.norm(Y, axis=0)
    if np.any(n == 0):
        raise EvaluationError("zero-norm probe")
    return Y / n


@dataclass
class CodingStats:
    solves: int = 0
    not_converged: int = 0

    def add(self, codes):
        self.solves += len(codes)
        self.not_converged += sum(not c.converged for c in codes)


def code_matrix(dictionary: Dictionary, Y: np.ndarray, cfg: SolverConfig = SolverConfig(),
                stats: CodingStats | None = None) -> np.ndarray:
    """Sparse codes (columns) of the unit probes in Y."""
    if Y.shape[0] != dictionary.dim:
        raise DictionaryError(
            f"probe dimension {Y.shape[0]} != dictionary dimension {dictionary.dim}")
    codes = solver.solve_l1_many(dictionary.matrix, Y, cfg)
    if stats is not None:
        stats.add(codes)
    return np.column_stack([c.coefficients for c in codes])


def score_matrix(dictionary: Dictionary, Y: np.ndarray, metric: Metric,
                 cfg: SolverConfig = SolverConfig(), stats: CodingStats | None = None,
                 codes: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray | None]:
    """(P, c) scores of unit probes (columns of Y) against every class.

    Pass `codes` to reuse an earlier solve. Returns the matrix and the codes
    (None for cosine, which needs no solve).
    """
    metric = Metric(metric)
    if Y.shape[0] != dictionary.dim:
        raise DictionaryError(
            f"probe dimension {Y.shape[0]} != dictionary dimension {dictionary.dim}")
    if metric is Metric.COSINE:
        return cosine_matrix(dictionary, Y), None
    X = code_matrix(dictionary, Y, cfg, stats) if codes is None else codes
    if metric is Metric.SCE:
        return sce_matrix(dictionary, Y, X), X
    return scr_matrix(dictionary, X), X


def _true_indices(dictionary: Dictionary, labels: Sequence[str]) -> np.ndarray:
    missing = sorted({t for t in labels if t not in dictionary})
    if missing:
        raise EvaluationError(f"probe classes not enrolled: {missing[:5]}")
    return np.array([dictionary.class_index(t) for t in labels], dtype=int)


def split_scores(M: np.ndarray, true_idx: np.ndarray, metric: Metric,
                 metadata: dict | None = None) -> tuple[ScoreSet, int]:
    """Genuine/imposter split of a score matrix; NaN rows are left out.

    Returns the ScoreSet and the number of undefined scores dropped.
    """
    P, c = M.shape
    gmask = np.zeros((P, c), dtype=bool)
    gmask[np.arange(P), true_idx] = True
    ok = ~np.isnan(M)
    undefined = int((~ok).sum())
    gen = M[gmask & ok]
    imp = M[~gmask & ok]
    meta = dict(metadata or {})
    return ScoreSet(gen, imp, Metric(metric).polarity, meta), undefined


def _labels(probes) -> list[str]:
    out = []
    for p in probes:
        label = getattr(p, "subject_id", None)
        if label is None:
            raise EvaluationError(f"probe {getattr(p, 'source_id', '?')!r} has no true class")
        out.append(label)
    return out


def generate_verification_scores(dictionary: Dictionary, probes: Sequence[FeatureVector],
                                 metric: Metric = Metric.SCE,
                                 cfg: SolverConfig = SolverConfig()) -> ScoreSet:
    """One genuine and c-1 imposter scores per probe (unimodal)."""
    true_idx = _true_indices(dictionary, _labels(probes))
    M, _ = score_matrix(dictionary, _stack(probes), metric, cfg)
    s, undefined = split_scores(M, true_idx, metric, {"metric": Metric(metric).value})
    s.metadata["undefined_score_count"] = undefined
    return s


@dataclass
class MultimodalMatrices:
    face: np.ndarray  # (unique face probes, c)
    ear: np.ndarray  # (unique ear probes, c)
    face_idx: np.ndarray  # per query
    ear_idx: np.ndarray

    @property
    def fused(self) -> np.ndarray:
        return self.face[self.face_idx] + self.ear[self.ear_idx]


def _unique(vectors) -> tuple[list, np.ndarray]:
    seen: dict[bytes, int] = {}
    uniq, idx = [], []
    for v in vectors:
        key = np.asarray(v.values, dtype=float).tobytes()
        if key not in seen:
            seen[key] = len(uniq)
            uniq.append(v)
        idx.append(seen[key])
    return uniq, np.array(idx, dtype=int)


def multimodal_matrices(face_dict: Dictionary, ear_dict: Dictionary,
                        queries: Sequence[MultimodalQuery], metric: Metric,
                        cfg: SolverConfig = SolverConfig(),
                        ear_cfg: SolverConfig | None = None,
                        stats: CodingStats | None = None) -> MultimodalMatrices:
    """Per-modality score matrices with each distinct probe vector coded once."""
    return multimodal_matrix_set(face_dict, ear_dict, queries, [metric], cfg, ear_cfg,
                                 stats)[Metric(metric)]


def multimodal_matrix_set(face_dict: Dictionary, ear_dict: Dictionary,
                          queries: Sequence[MultimodalQuery], metrics: Sequence[Metric],
                          cfg: SolverConfig = SolverConfig(),
                          ear_cfg: SolverConfig | None = None,
                          stats: CodingStats | None = None
                          ) -> dict[Metric, MultimodalMatrices]:
    """Like multimodal_matrices for several metrics sharing one solve per probe."""
    if face_dict.class_ids != ear_dict.class_ids:
        raise EvaluationError("face and ear dictionaries enroll different classes")
    if not queries:
        raise EvaluationError("no probes")
    fu, fidx = _unique([q.face_feature for q in queries])
    eu, eidx = _unique([q.ear_feature for q in queries])
    Yf, Ye = _stack(fu), _stack(eu)
    Xf = Xe = None
    out = {}
    for metric in map(Metric, metrics):
        Mf, Xf = score_matrix(face_dict, Yf, metric, cfg, stats, Xf)
        Me, Xe = score_matrix(ear_dict, Ye, metric, ear_cfg or cfg, stats, Xe)
        out[metric] = MultimodalMatrices(Mf, Me, fidx, eidx)
    return out


def generate_multimodal_scores(face_dict: Dictionary, ear_dict: Dictionary,
                               queries: Sequence[MultimodalQuery],
                               metric: Metric = Metric.SCE,
                               cfg: SolverConfig = SolverConfig()) -> ScoreSet:
    true_idx = _true_indices(face_dict, [q.claimed for q in queries])
    mm = multimodal_matrices(face_dict, ear_dict, queries, metric, cfg)
    s, undefined = split_scores(mm.fused, true_idx, metric,
                                {"metric": Metric(metric).value, "modality": "fused"})
    s.metadata["undefined_score_count"] = undefined
    return s


# ---------------------------------------------------------------------------
# reports

@dataclass
class EvalReport:
    eer: float
    roc: Roc
    cmc: Cmc
    scores: ScoreSet
    undefined_score_count: int = 0
    runtime_stats: RuntimeStats | None = None
    metadata: dict = field(default_factory=dict)
    records: list[ScoreRecord] | None = field(default=None, repr=False)

    @property
    def rank_one(self) -> float:
        return self.cmc.rank_one

    def to_dict(self) -> dict:
        out = {
            "eer": self.eer,
            "rank_one": self.rank_one,
            "genuine_count": int(self.scores.genuine.size),
            "imposter_count": int(self.scores.imposter.size),
            "undefined_score_count": self.undefined_score_count,
            "polarity": self.scores.polarity,
            "roc_points": len(self.roc),
            "cmc": [float(v) for v in self.cmc.rates],
            "metadata": self.metadata,
        }
        out["runtime_stats"] = self.runtime_stats.to_dict() if self.runtime_stats else None
        return out


def build_report(M: np.ndarray, true_idx: np.ndarray, metric: Metric,
                 metadata: dict | None = None) -> EvalReport:
    s, undefined = split_scores(M, true_idx, metric, metadata)
    roc = compute_roc(s)
    return EvalReport(compute_eer(roc), roc, cmc_from_matrix(M, true_idx, metric), s,
                      undefined, metadata=dict(metadata or {}))


def evaluate_unimodal(dictionary: Dictionary, probes: Sequence[FeatureVector],
                      metric: Metric = Metric.SCE, cfg: SolverConfig = SolverConfig(),
                      keep_records: bool = False) -> EvalReport:
    return evaluate_unimodal_metrics(dictionary, probes, [metric], cfg,
                                     keep_records)[Metric(metric)]


def evaluate_unimodal_metrics(dictionary: Dictionary, probes: Sequence[FeatureVector],
                              metrics: Sequence[Metric], cfg: SolverConfig = SolverConfig(),
                              keep_records: bool = False) -> dict[Metric, EvalReport]:
    """One report per metric; SCE and SCR share the same codes."""
    labels = _labels(probes)
    true_idx = _true_indices(dictionary, labels)
    Y = _stack(probes)
    stats = CodingStats()
    X = None
    out = {}
    for metric in map(Metric, metrics):
        M, X = score_matrix(dictionary, Y, metric, cfg, stats, X)
        meta = {"metric": metric.value, "modality": dictionary.modality,
                "classes": dictionary.n_classes, "probes": len(probes),
                "solves": stats.solves, "not_converged": stats.not_converged}
        rep = build_report(M, true_idx, metric, meta)
        if keep_records:
            rep.records = _records(M, [p.source_id for p in probes], labels,
                                   dictionary.class_ids, metric, dictionary.modality)
        out[metric] = rep
    return out


def evaluate_multimodal(face_dict: Dictionary, ear_dict: Dictionary,
                        queries: Sequence[MultimodalQuery],
                        metric: Metric = Metric.SCE, cfg: SolverConfig = SolverConfig(),
                        ear_cfg: SolverConfig | None = None,
                        keep_records: bool = False) -> dict[str, EvalReport]:
    """Face, ear and fused reports from one pass over the probes."""
    return evaluate_multimodal_metrics(face_dict, ear_dict, queries, [metric], cfg, ear_cfg,
                                       keep_records)[Metric(metric)]


def evaluate_multimodal_metrics(face_dict: Dictionary, ear_dict: Dictionary,
                                queries: Sequence[MultimodalQuery], metrics: Sequence[Metric],
                                cfg: SolverConfig = SolverConfig(),
                                ear_cfg: SolverConfig | None = None,
                                keep_records: bool = False
                                ) -> dict[Metric, dict[str, EvalReport]]:
    """Per metric: face, ear and fused reports. Each probe vector is coded once."""
    labels = [q.claimed for q in queries]
    true_idx = _true_indices(face_dict, labels)
    stats = CodingStats()
    sets = multimodal_matrix_set(face_dict, ear_dict, queries, metrics, cfg, ear_cfg, stats)

    def uni_labels(idx, n):
        out = np.zeros(n, dtype=int)
        out[idx] = true_idx
        return out

    result = {}
    for metric, mm in sets.items():
        common = {"metric": metric.value, "classes": face_dict.n_classes,
                  "solves": stats.solves, "not_converged": stats.not_converged}
        fl = uni_labels(mm.face_idx, mm.face.shape[0])
        el = uni_labels(mm.ear_idx, mm.ear.shape[0])
        reports = {
            "face": build_report(mm.face, fl, metric,
                                 {**common, "modality": "face", "probes": int(fl.size)}),
            "ear": build_report(mm.ear, el, metric,
                                {**common, "modality": "ear", "probes": int(el.size)}),
        }
        fused = mm.fused
        reports["fused"] = build_report(fused, true_idx, metric,
                                        {**common, "modality": "fused",
                                         "probes": len(queries)})
        if keep_records:
            ids = [q.probe_id for q in queries]
            reports["fused"].records = _records(fused, ids, labels, face_dict.class_ids,
                                                metric, "fused")
        result[metric] = reports
    return result


def _records(M, probe_ids, labels, class_ids, metric, modality) -> list[ScoreRecord]:
    metric = Metric(metric)
    out = []
    for i, (pid, truth) in enumerate(zip(probe_ids, labels)):
        for j, cid in enumerate(class_ids):
            if not np.isnan(M[i, j]):
                out.append(ScoreRecord(pid, cid, truth, metric, float(M[i, j]), modality))
    return out


def write_report(report: EvalReport, out_dir, prefix: str, hist_bins: int = 50) -> list:
    """Write <prefix>_report.json and the roc/cmc/histogram CSVs."""
    out = Path(out_dir)
    files = {
        "report": out / f"{prefix}_report.json",
        "roc": out / f"{prefix}_roc.csv",
        "cmc": out / f"{prefix}_cmc.csv",
        "hist": out / f"{prefix}_hist.csv",
    }
    d = report.to_dict()
    d["files"] = {k: v.name for k, v in files.items() if k != "report"}
    files["report"].write_text(json.dumps(d, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    _write_rows(files["roc"], ["threshold", "far", "frr"],
                ([format_float(p.threshold), format_float(p.far), format_float(p.frr)]
                 for p in report.roc.points()))
    _write_rows(files["cmc"], ["rank", "rate"],
                ([r + 1, format_float(v)] for r, v in enumerate(report.cmc.rates)))
    h = histogram_scores(report.scores, hist_bins)
    _write_rows(files["hist"], ["bin_lo", "bin_hi", "genuine", "imposter"],
                ([format_float(h.edges[i]), format_float(h.edges[i + 1]),
                  format_float(h.genuine[i]), format_float(h.imposter[i])]
                 for i in range(h.genuine.size)))
    return list(files.values())


def _write_rows(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# ---------------------------------------------------------------------------
# small random dictionaries

def trial_rng(seed: int, trial: int, class_idx: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, trial, class_idx]))


def _small_rows(dictionary: Dictionary, Y: np.ndarray, metric, cfg, k, seed, trial,
                cls, stats) -> tuple[np.ndarray, np.ndarray]:
    """Scores of the probes in Y (all of class index `cls`) on a sampled dictionary.

    Returns (genuine (P,), imposter (P, k-1)).
    """
    ids = sample_classes(dictionary.class_ids, dictionary.class_ids[cls], k,
                         trial_rng(seed, trial, cls))
    sub = subset(dictionary, ids)
    M, _ = score_matrix(sub, Y, metric, cfg, stats)
    t = sub.class_index(dictionary.class_ids[cls])
    keep = np.arange(M.shape[1]) != t
    return M[:, t], M[:, keep]


def small_dictionary_scores(dictionary: Dictionary, probes: Sequence[FeatureVector], k: int,
                            trial: int, seed: int, metric: Metric = Metric.SCE,
                            cfg: SolverConfig = SolverConfig(),
                            stats: CodingStats | None = None) -> ScoreSet:
    """Unimodal scores where each probe is coded on its class's sampled sub-dictionary.

    The sub-dictionary for a claimed class depends only on (seed, trial,
    class), so it is shared by every probe of that class in the trial.
    """
    labels = _labels(probes)
    true_idx = _true_indices(dictionary, labels)
    if not 1 <= k <= dictionary.n_classes:
        raise EvaluationError(f"scale {k} outside 1..{dictionary.n_classes}")
    gen, imp = [], []
    for cls in np.unique(true_idx):
        rows = np.flatnonzero(true_idx == cls)
        Y = _stack([probes[i] for i in rows])
        g, im = _small_rows(dictionary, Y, metric, cfg, k, seed, trial, int(cls), stats)
        gen.append(g)
        imp.append(im.ravel())
    return _finite_set(np.concatenate(gen), np.concatenate(imp), metric,
                       {"scale": k, "trial": trial, "seed": seed})


def small_dictionary_scores_multimodal(face_dict: Dictionary, ear_dict: Dictionary,
                                       queries: Sequence[MultimodalQuery], k: int, trial: int,
                                       seed: int, metric: Metric = Metric.SCE,
                                       cfg: SolverConfig = SolverConfig(),
                                       stats: CodingStats | None = None) -> ScoreSet:
    """Fused scores with one class set per (trial, claimed class) for both modalities."""
    if face_dict.class_ids != ear_dict.class_ids:
        raise EvaluationError("face and ear dictionaries enroll different classes")
    if not 1 <= k <= face_dict.n_classes:
        raise EvaluationError(f"scale {k} outside 1..{face_dict.n_classes}")
    true_idx = _true_indices(face_dict, [q.claimed for q in queries])
    gen, imp = [], []
    for cls in np.unique(true_idx):
        qs = [queries[i] for i in np.flatnonzero(true_idx == cls)]
        fu, fidx = _unique([q.face_feature for q in qs])
        eu, eidx = _unique([q.ear_feature for q in qs])
        gf, imf = _small_rows(face_dict, _stack(fu), metric, cfg, k, seed, trial, int(cls),
                              stats)
        ge, ime = _small_rows(ear_dict, _stack(eu), metric, cfg, k, seed, trial, int(cls),
                              stats)
        gen.append(gf[fidx] + ge[eidx])
        imp.append((imf[fidx] + ime[eidx]).ravel())
    return _finite_set(np.concatenate(gen), np.concatenate(imp), metric,
                       {"scale": k, "trial": trial, "seed": seed, "modality": "fused"})


def _finite_set(gen, imp, metric, meta) -> ScoreSet:
    undefined = int(np.isnan(gen).sum() + np.isnan(imp).sum())
    s = ScoreSet(gen[~np.isnan(gen)], imp[~np.isnan(imp)], Metric(metric).polarity, meta)
    s.metadata["undefined_score_count"] = undefined
    return s


@dataclass
class ScaleSummary:
    scale: int
    eers: list[float]
    runtime: RuntimeStats | None = None

    @property
    def mean(self) -> float:
        return float(np.mean(self.eers))

    @property
    def spread(self) -> float:
        """Largest absolute deviation of a trial EER from the mean."""
        return float(np.max(np.abs(np.asarray(self.eers) - self.mean)))

    def formatted(self, digits: int = 2) -> str:
        return f"{100 * self.mean:.{digits}f} (± {100 * self.spread:.{digits}f})"

    def to_dict(self) -> dict:
        return {"scale": self.scale, "trials": len(self.eers), "eers": self.eers,
                "eer_mean": self.mean, "eer_spread": self.spread,
                "eer_percent": self.formatted(),
                "runtime_stats": self.runtime.to_dict() if self.runtime else None}


def sweep_scales(scales: Sequence[int], trials: int,
                 score_fn: Callable[[int, int], ScoreSet],
                 full: int | None = None) -> list[ScaleSummary]:
    """EER of ``score_fn(k, trial)`` over trials for every scale.

    When k equals `full` every trial uses the whole dictionary, so it is
    scored once and repeated.
    """
    if trials < 1:
        raise EvaluationError("trials must be >= 1")
    out = []
    for k in scales:
        if full is not None and k == full:
            eers = [eer_of(score_fn(k, 0))] * trials
        else:
            eers = [eer_of(score_fn(k, r)) for r in range(trials)]
        out.append(ScaleSummary(int(k), eers))
    return out
