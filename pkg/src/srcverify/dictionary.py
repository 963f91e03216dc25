"""Class-partitioned dictionaries and small random sub-dictionaries."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .features import FeatureVector, group_by_subject, read_feature_csv, write_feature_csv


class DictionaryError(ValueError):
    pass


@dataclass
class ClassBlock:
    class_id: str
    samples: list[FeatureVector]

    def __post_init__(self):
        if not self.samples:
            raise DictionaryError(f"class {self.class_id!r} has no samples")
        dims = {s.dim for s in self.samples}
        mods = {s.modality for s in self.samples}
        if len(dims) != 1 or len(mods) != 1:
            raise DictionaryError(
                f"class {self.class_id!r} mixes dimensions or modalities")

    @property
    def matrix(self) -> np.ndarray:
        return np.column_stack([s.values for s in self.samples])


@dataclass
class Dictionary:
    """Column-stacked, unit-norm training samples A = [A_1, ..., A_c].

    Build with :func:`build_dictionary`; treat instances as read-only.
    """

    blocks: list[ClassBlock]
    matrix: np.ndarray
    column_class_map: np.ndarray  # column -> index into class_ids
    class_ids: list[str] = field(init=False)
    _slices: dict[str, slice] = field(init=False, repr=False)

    def __post_init__(self):
        self.class_ids = [b.class_id for b in self.blocks]
        self._slices = {}
        start = 0
        for b in self.blocks:
            self._slices[b.class_id] = slice(start, start + len(b.samples))
            start += len(b.samples)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_columns(self) -> int:
        return self.matrix.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.blocks)

    @property
    def modality(self) -> str:
        return self.blocks[0].samples[0].modality

    def columns_of(self, class_id: str) -> slice:
        try:
            return self._slices[class_id]
        except KeyError:
            raise DictionaryError(f"unknown class {class_id!r}") from None

    def block(self, class_id: str) -> ClassBlock:
        return self.blocks[self.class_index(class_id)]

    def class_index(self, class_id: str) -> int:
        self.columns_of(class_id)
        return self.class_ids.index(class_id)

    def __contains__(self, class_id) -> bool:
        return class_id in self._slices


def unit_columns(M: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(M, axis=0)
    if np.any(norms == 0):
        raise DictionaryError("zero-norm sample")
    return M / norms


def build_dictionary(blocks: Sequence[ClassBlock]) -> Dictionary:
    """Stack blocks in order and scale every column to unit L2 norm."""
    blocks = list(blocks)
    if not blocks:
        raise DictionaryError("no class blocks")
    ids = [b.class_id for b in blocks]
    if len(set(ids)) != len(ids):
        dup = sorted({i for i in ids if ids.count(i) > 1})
        raise DictionaryError(f"duplicate class ids: {dup}")
    dims = {b.samples[0].dim for b in blocks}
    if len(dims) != 1:
        raise DictionaryError(f"inconsistent dimensions {sorted(dims)}")
    raw = np.column_stack([b.matrix for b in blocks])
    for b in blocks:
        for s in b.samples:
            if not np.any(s.values):
                raise DictionaryError(f"zero-norm sample {s.source_id!r} in {b.class_id!r}")
    matrix = unit_columns(raw)
    cmap = np.repeat(np.arange(len(blocks)), [len(b.samples) for b in blocks])
    return Dictionary(blocks, matrix, cmap)


def blocks_from_features(features: Sequence[FeatureVector]) -> list[ClassBlock]:
    return [ClassBlock(cid, samples) for cid, samples in group_by_subject(features).items()]


def delta(code, dictionary: Dictionary, class_id: str) -> np.ndarray:
    """Keep the coefficients of `class_id`'s columns, zero the rest."""
    coef = np.asarray(getattr(code, "coefficients", code), dtype=float)
    if coef.shape != (dictionary.n_columns,):
        raise DictionaryError(
            f"code length {coef.shape} != {dictionary.n_columns} dictionary columns")
    out = np.zeros_like(coef)
    sl = dictionary.columns_of(class_id)
    out[sl] = coef[sl]
    return out


def subset(dictionary: Dictionary, class_ids) -> Dictionary:
    """Sub-dictionary over `class_ids`, keeping the parent's block order."""
    wanted = set(class_ids)
    missing = wanted.difference(dictionary.class_ids)
    if missing:
        raise DictionaryError(f"unknown classes {sorted(missing)}")
    keep = [i for i, cid in enumerate(dictionary.class_ids) if cid in wanted]
    cols = np.concatenate([np.arange(dictionary.n_columns)[
        dictionary.columns_of(dictionary.class_ids[i])] for i in keep])
    blocks = [dictionary.blocks[i] for i in keep]
    cmap = np.repeat(np.arange(len(blocks)), [len(b.samples) for b in blocks])
    return Dictionary(blocks, dictionary.matrix[:, cols], cmap)


def sample_classes(class_ids: Sequence[str], claimed: str, k: int,
                   rng: np.random.Generator) -> list[str]:
    if claimed not in class_ids:
        raise DictionaryError(f"unknown claimed class {claimed!r}")
    if not 1 <= k <= len(class_ids):
        raise DictionaryError(f"k={k} outside 1..{len(class_ids)}")
    others = [c for c in class_ids if c != claimed]
    picked = set(rng.choice(len(others), size=k - 1, replace=False).tolist())
    chosen = {claimed} | {others[i] for i in picked}
    return [c for c in class_ids if c in chosen]


def sample_small_dictionary(dictionary: Dictionary, claimed: str, k: int,
                            seed) -> Dictionary:
    """Claimed class plus k-1 classes drawn uniformly without replacement.

    `seed` is anything accepted by ``numpy.random.default_rng``.
    """
    rng = np.random.default_rng(seed)
    return subset(dictionary, sample_classes(dictionary.class_ids, claimed, k, rng))


# ---------------------------------------------------------------------------
# serialization: feature CSV of the normalized columns + JSON manifest

def save_dictionary(dictionary: Dictionary, csv_path, manifest_path) -> None:
    rows = []
    for j, cls_idx in enumerate(dictionary.column_class_map):
        block = dictionary.blocks[cls_idx]
        src = block.samples[j - dictionary.columns_of(block.class_id).start]
        rows.append(FeatureVector(dictionary.matrix[:, j], modality=src.modality,
                                  source_id=src.source_id, subject_id=block.class_id))
    write_feature_csv(csv_path, rows)
    manifest = {
        "class_ids": dictionary.class_ids,
        "samples_per_class": [len(b.samples) for b in dictionary.blocks],
        "modality": dictionary.modality,
        "dimension": dictionary.dim,
        "features": Path(csv_path).name,
    }
    Path(manifest_path).write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")


def load_dictionary(csv_path, manifest_path=None) -> Dictionary:
    features = read_feature_csv(csv_path)
    d = build_dictionary(blocks_from_features(features))
    if manifest_path is not None:
        man = json.loads(Path(manifest_path).read_text(encoding="utf-8"))
        if man["class_ids"] != d.class_ids:
            raise DictionaryError("manifest class order disagrees with feature file")
        if man["samples_per_class"] != [len(b.samples) for b in d.blocks]:
            raise DictionaryError("manifest sample counts disagree with feature file")
        if man["dimension"] != d.dim:
            raise DictionaryError("manifest dimension disagrees with feature file")
    return d
