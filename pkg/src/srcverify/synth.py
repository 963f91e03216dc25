"""Synthetic "bouquet" datasets and virtual face+ear pairing.

Class centers sit in a small spherical cap around a shared mean direction,
so classes are tightly bundled and overlap is controlled by two knobs:
`between_spread` (angular radius of the cap, radians) and `within_spread`
(isotropic noise added to each sample before renormalizing).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .dictionary import ClassBlock, Dictionary, blocks_from_features, build_dictionary
from .features import FeatureVector, read_feature_csv, write_feature_csv
from .fusion import MultimodalQuery


class SynthError(ValueError):
    pass


@dataclass(frozen=True)
class SynthParams:
    c: int = 50
    l: int = 7  # noqa: E741
    p: int = 8
    dim: int = 200
    within_spread: float = 0.3
    between_spread: float = 0.8
    seed: int = 42
    modality: str = "face"

    def __post_init__(self):
        for name in ("c", "l", "p", "dim"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise SynthError(f"{name} must be a positive integer, got {v!r}")
        for name in ("within_spread", "between_spread"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise SynthError(f"{name} must be >= 0, got {v!r}")


@dataclass
class Dataset:
    """Gallery blocks plus labelled probe vectors of one modality."""

    gallery: list[ClassBlock]
    probes: list[FeatureVector]
    params: SynthParams | None = None

    @property
    def class_ids(self) -> list[str]:
        return [b.class_id for b in self.gallery]

    def dictionary(self) -> Dictionary:
        return build_dictionary(self.gallery)

    def probes_of(self, class_id: str) -> list[FeatureVector]:
        return [p for p in self.probes if p.subject_id == class_id]


def _unit_rows(M: np.ndarray) -> np.ndarray:
    return M / np.linalg.norm(M, axis=-1, keepdims=True)


def _cap_centers(rng: np.random.Generator, c: int, dim: int, radius: float) -> np.ndarray:
    mean = _unit_rows(rng.standard_normal(dim))
    if dim == 1:
        return np.tile(mean, (c, 1))
    # tangent directions orthogonal to the mean, angle uniform in [0, radius]
    tang = rng.standard_normal((c, dim))
    tang -= np.outer(tang @ mean, mean)
    tang = _unit_rows(tang)
    ang = radius * rng.random(c)
    return np.cos(ang)[:, None] * mean + np.sin(ang)[:, None] * tang


def class_label(i: int) -> str:
    return f"s{i:03d}"


def gen_dataset(params: SynthParams) -> Dataset:
    """Draw a dataset; identical params give identical output.

    Centers and noise come from separate streams, so changing only
    `within_spread` rescales the same noise draws.
    """
    c, l, p, dim = params.c, params.l, params.p, params.dim
    center_ss, noise_ss = np.random.SeedSequence(params.seed).spawn(2)
    centers = _cap_centers(np.random.default_rng(center_ss), c, dim, params.between_spread)
    noise = np.random.default_rng(noise_ss).standard_normal((c, l + p, dim))
    samples = centers[:, None, :] + params.within_spread * noise / np.sqrt(dim)
    norms = np.linalg.norm(samples, axis=-1, keepdims=True)
    # a noise draw cancelling its center exactly is measure-zero; fall back to it
    samples = np.where(norms > 0, samples / np.where(norms > 0, norms, 1.0),
                       centers[:, None, :])

    gallery, probes = [], []
    for i in range(c):
        cid = class_label(i)
        fv = [FeatureVector(samples[i, j], modality=params.modality,
                            source_id=f"{params.modality}_{cid}_{j:02d}", subject_id=cid)
              for j in range(l + p)]
        gallery.append(ClassBlock(cid, fv[:l]))
        probes.extend(fv[l:])
    return Dataset(gallery, probes, params)


# ---------------------------------------------------------------------------
# virtual multimodal pairing

@dataclass
class PairedDataset:
    subjects: list[tuple[ClassBlock, ClassBlock]]
    face_probes: list[FeatureVector]
    ear_probes: list[FeatureVector]
    probes: list[MultimodalQuery]
    pairing: dict[str, tuple[str, str]] = field(default_factory=dict)

    @property
    def class_ids(self) -> list[str]:
        return [f.class_id for f, _ in self.subjects]

    @property
    def face_gallery(self) -> list[ClassBlock]:
        return [f for f, _ in self.subjects]

    @property
    def ear_gallery(self) -> list[ClassBlock]:
        return [e for _, e in self.subjects]

    def dictionaries(self) -> tuple[Dictionary, Dictionary]:
        return build_dictionary(self.face_gallery), build_dictionary(self.ear_gallery)


def _relabel(fv: FeatureVector, cid: str) -> FeatureVector:
    return replace(fv, subject_id=cid)


def pair_multimodal(face_ds: Dataset, ear_ds: Dataset, seed) -> PairedDataset:
    """Randomly pair face subjects with ear subjects under virtual ids.

    Uses the first min(c_face, c_ear) face subjects and a random choice of
    ear subjects for them. Gallery samples are paired index-wise (truncated
    to the shorter block); each face probe is paired with every ear probe
    of the same virtual subject.
    """
    if not face_ds.gallery or not ear_ds.gallery:
        raise SynthError("cannot pair an empty dataset")
    n = min(len(face_ds.gallery), len(ear_ds.gallery))
    rng = np.random.default_rng(seed)
    ear_pick = rng.permutation(len(ear_ds.gallery))[:n]

    subjects, face_probes, ear_probes, queries, pairing = [], [], [], [], {}
    for i in range(n):
        fblock, eblock = face_ds.gallery[i], ear_ds.gallery[int(ear_pick[i])]
        vid = class_label(i)
        pairing[vid] = (fblock.class_id, eblock.class_id)
        m = min(len(fblock.samples), len(eblock.samples))
        subjects.append((ClassBlock(vid, [_relabel(s, vid) for s in fblock.samples[:m]]),
                         ClassBlock(vid, [_relabel(s, vid) for s in eblock.samples[:m]])))
        fps = [_relabel(s, vid) for s in face_ds.probes_of(fblock.class_id)]
        eps = [_relabel(s, vid) for s in ear_ds.probes_of(eblock.class_id)]
        face_probes.extend(fps)
        ear_probes.extend(eps)
        for fp in fps:
            for ep in eps:
                queries.append(MultimodalQuery(fp, ep, vid,
                                               probe_id=f"{fp.source_id}+{ep.source_id}"))
    return PairedDataset(subjects, face_probes, ear_probes, queries, pairing)


def md_shape(c: int, face_p: int, ear_p: int, l: int = 7, dim: int = 200,  # noqa: E741
             seed: int = 42, **spread) -> PairedDataset:
    """Paired synthetic set; face, ear and pairing use independent seeds."""
    face_ss, ear_ss, pair_ss = np.random.SeedSequence(seed).spawn(3)
    seed_of = lambda ss: int(ss.generate_state(1)[0])  # noqa: E731
    face = gen_dataset(SynthParams(c=c, l=l, p=face_p, dim=dim, seed=seed_of(face_ss),
                                   modality="face", **spread))
    ear = gen_dataset(SynthParams(c=c, l=l, p=ear_p, dim=dim, seed=seed_of(ear_ss),
                                  modality="ear", **spread))
    return pair_multimodal(face, ear, seed_of(pair_ss))


def md1_like(seed: int = 42, **spread) -> PairedDataset:
    """50 subjects, 7 gallery, 8 face probes x 11 ear probes."""
    return md_shape(50, 8, 11, seed=seed, **spread)


def md2_like(seed: int = 42, **spread) -> PairedDataset:
    """79 subjects, 7 gallery, 7 face probes x 11 ear probes."""
    return md_shape(79, 7, 11, seed=seed, **spread)


# ---------------------------------------------------------------------------
# on-disk layout: one gallery and one probe CSV per modality plus a manifest

def save_paired(ds: PairedDataset, out_dir, params: dict | None = None) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "face_gallery.csv": [s for b in ds.face_gallery for s in b.samples],
        "face_probes.csv": ds.face_probes,
        "ear_gallery.csv": [s for b in ds.ear_gallery for s in b.samples],
        "ear_probes.csv": ds.ear_probes,
    }
    written = []
    for name, rows in files.items():
        write_feature_csv(out / name, rows)
        written.append(out / name)
    manifest = {
        "class_ids": ds.class_ids,
        "pairing": {k: list(v) for k, v in ds.pairing.items()},
        "files": sorted(files),
        "params": params or {},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    written.append(out / "manifest.json")
    return written


def load_paired(data_dir) -> PairedDataset:
    d = Path(data_dir)
    if not (d / "manifest.json").exists():
        raise SynthError(f"{d} has no manifest.json")
    man = json.loads((d / "manifest.json").read_text(encoding="utf-8"))
    fg = Dataset(blocks_from_features(read_feature_csv(d / "face_gallery.csv")),
                 read_feature_csv(d / "face_probes.csv"))
    eg = Dataset(blocks_from_features(read_feature_csv(d / "ear_gallery.csv")),
                 read_feature_csv(d / "ear_probes.csv"))
    pairing = {k: tuple(v) for k, v in man.get("pairing", {}).items()}
    return combine_modalities(fg, eg, pairing)


def combine_modalities(face: Dataset, ear: Dataset, pairing: dict | None = None
                       ) -> PairedDataset:
    """Pair two datasets that already share subject ids (no shuffling)."""
    if face.class_ids != ear.class_ids:
        raise SynthError("face and ear galleries list different subjects")
    queries = []
    for cid in face.class_ids:
        for fp in face.probes_of(cid):
            for ep in ear.probes_of(cid):
                queries.append(MultimodalQuery(fp, ep, cid,
                                               probe_id=f"{fp.source_id}+{ep.source_id}"))
    return PairedDataset(list(zip(face.gallery, ear.gallery)), face.probes, ear.probes,
                         queries, pairing or {})


def params_dict(p: SynthParams) -> dict:
    return asdict(p)
