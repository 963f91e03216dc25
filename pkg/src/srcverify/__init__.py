"""Sparse-representation biometric verification with face+ear score fusion."""

from .dictionary import (ClassBlock, Dictionary, build_dictionary, delta,
                         sample_small_dictionary)
from .evaluation import (EvalReport, ScoreSet, compute_cmc, compute_eer, compute_roc,
                         generate_verification_scores, identify)
from .features import FeatureVector, RawImage, dct2, extract_features, zigzag_scan
from .fusion import FusedScore, MultimodalQuery, score_all_classes_multimodal, verify_multimodal
from .scoring import Metric, MatchScore, cosine_best_match, decide_sce, decide_scr, sce, scr
from .solver import SolverConfig, SparseCode, solve_l0_exact, solve_l1
from .synth import SynthParams, gen_dataset, pair_multimodal

__version__ = "0.1.0"

__all__ = [
    "ClassBlock", "Dictionary", "EvalReport", "FeatureVector", "FusedScore", "MatchScore",
    "Metric", "MultimodalQuery", "RawImage", "ScoreSet", "SolverConfig", "SparseCode",
    "SynthParams", "build_dictionary", "compute_cmc", "compute_eer", "compute_roc",
    "cosine_best_match", "dct2", "decide_sce", "decide_scr", "delta", "extract_features",
    "gen_dataset", "generate_verification_scores", "identify", "pair_multimodal",
    "sample_small_dictionary", "sce", "score_all_classes_multimodal", "scr", "solve_l0_exact",
    "solve_l1", "verify_multimodal", "zigzag_scan",
]
