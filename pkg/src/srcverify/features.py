"""Image loading and 2D-DCT/zigzag feature extraction.

Grayscale images are read from binary PGM, resized with bilinear
interpolation, transformed with an orthonormal type-II 2D DCT and
flattened by a JPEG-style zigzag scan of the low-frequency corner.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.fft import dctn, idctn

DEFAULT_WIDTH = 50
DEFAULT_HEIGHT = 40
DEFAULT_DIM = 200


class ImageFormatError(ValueError):
    """Raised for malformed or unsupported image containers."""


class FeatureFileError(ValueError):
    """Raised when a feature CSV does not follow the expected layout."""


@dataclass(frozen=True)
class RawImage:
    width: int
    height: int
    pixels: np.ndarray  # (height, width), values in [0, 1]

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("image dimensions must be positive")
        px = np.asarray(self.pixels, dtype=float)
        if px.size != self.width * self.height:
            raise ValueError(
                f"pixel count {px.size} != {self.width}x{self.height}")
        px = px.reshape(self.height, self.width)
        if not np.all(np.isfinite(px)) or px.min() < 0.0 or px.max() > 1.0:
            raise ValueError("pixel intensities must lie in [0, 1]")
        object.__setattr__(self, "pixels", px)


@dataclass
class FeatureVector:
    """One biometric sample in feature space."""

    values: np.ndarray
    modality: str = "face"
    source_id: str = ""
    subject_id: str | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).ravel()
        if self.values.size < 1:
            raise ValueError("feature vector must have at least one entry")
        if not np.all(np.isfinite(self.values)):
            raise ValueError(f"non-finite feature values in {self.source_id!r}")

    @property
    def dim(self) -> int:
        return self.values.size


# ---------------------------------------------------------------------------
# PGM container

def _pgm_tokens(data: bytes, count: int):
    """Read `count` whitespace-separated header tokens, skipping comments.

    Returns the tokens and the offset of the single whitespace byte that
    terminates the last token.
    """
    tokens = []
    pos = 0
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise ImageFormatError("truncated PGM header")
        tokens.append(data[start:pos])
    if pos >= n:
        raise ImageFormatError("truncated PGM header")
    return tokens, pos


def load_image(data: bytes) -> RawImage:
    """Decode an 8-bit binary PGM (P5) into a RawImage scaled to [0, 1]."""
    if not data.startswith(b"P5"):
        raise ImageFormatError("not a binary PGM (missing P5 magic)")
    (magic, w, h, maxval), pos = _pgm_tokens(data, 4)
    try:
        width, height, maxval = int(w), int(h), int(maxval)
    except ValueError as exc:
        raise ImageFormatError(f"bad PGM header field: {exc}") from None
    if width <= 0 or height <= 0:
        raise ImageFormatError("zero-size image")
    if not 0 < maxval < 256:
        raise ImageFormatError(f"only 8-bit PGM is supported (maxval={maxval})")
    body = data[pos + 1:]
    if len(body) < width * height:
        raise ImageFormatError(
            f"truncated pixel data: {len(body)} of {width * height} bytes")
    px = np.frombuffer(body, dtype=np.uint8, count=width * height)
    px = np.minimum(px.astype(float) / maxval, 1.0)
    return RawImage(width, height, px.reshape(height, width))


def encode_pgm(img: RawImage) -> bytes:
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    px = np.rint(img.pixels * 255.0).astype(np.uint8)
    return header + px.tobytes()


def read_image(path: str | Path) -> RawImage:
    return load_image(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# Geometry, transform, scan

def _sample_coords(src: int, dst: int) -> np.ndarray:
    # align-corners mapping: first/last destination pixels land on source corners
    if dst == 1:
        return np.zeros(1)
    return np.arange(dst) * ((src - 1) / (dst - 1))


def normalize_geometry(img: RawImage, target_w: int = DEFAULT_WIDTH,
                       target_h: int = DEFAULT_HEIGHT) -> RawImage:
    """Bilinear resize to `target_w` x `target_h`."""
    if target_w < 1 or target_h < 1:
        raise ValueError("target size must be positive")
    if (img.width, img.height) == (target_w, target_h):
        return RawImage(target_w, target_h, img.pixels.copy())

    ys = _sample_coords(img.height, target_h)
    xs = _sample_coords(img.width, target_w)
    y0 = np.clip(np.floor(ys).astype(int), 0, img.height - 1)
    x0 = np.clip(np.floor(xs).astype(int), 0, img.width - 1)
    y1 = np.minimum(y0 + 1, img.height - 1)
    x1 = np.minimum(x0 + 1, img.width - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]

    p = img.pixels
    top = p[np.ix_(y0, x0)] * (1 - wx) + p[np.ix_(y0, x1)] * wx
    bottom = p[np.ix_(y1, x0)] * (1 - wx) + p[np.ix_(y1, x1)] * wx
    out = np.clip(top * (1 - wy) + bottom * wy, 0.0, 1.0)
    return RawImage(target_w, target_h, out)


def dct2(img: RawImage | np.ndarray) -> np.ndarray:
    """Orthonormal type-II 2D DCT; returns a (height, width) grid."""
    px = img.pixels if isinstance(img, RawImage) else np.asarray(img, dtype=float)
    return dctn(px, type=2, norm="ortho")


def idct2(grid: np.ndarray) -> np.ndarray:
    return idctn(np.asarray(grid, dtype=float), type=2, norm="ortho")


def zigzag_indices(height: int, width: int) -> list[tuple[int, int]]:
    """JPEG zigzag order over a height x width grid.

    Anti-diagonals are visited in increasing row+col; the first move from
    the corner goes right, so even diagonals run bottom-left to top-right.
    """
    order = []
    for s in range(height + width - 1):
        lo = max(0, s - width + 1)
        hi = min(s, height - 1)
        rows = range(hi, lo - 1, -1) if s % 2 == 0 else range(lo, hi + 1)
        order.extend((r, s - r) for r in rows)
    return order


def zigzag_scan(grid: np.ndarray, d: int = DEFAULT_DIM, modality: str = "face",
                source_id: str = "", subject_id: str | None = None) -> FeatureVector:
    grid = np.asarray(grid, dtype=float)
    h, w = grid.shape
    if d < 1 or d > h * w:
        raise ValueError(f"dimension {d} outside 1..{h * w}")
    idx = zigzag_indices(h, w)[:d]
    rows, cols = zip(*idx)
    return FeatureVector(grid[list(rows), list(cols)], modality=modality,
                         source_id=source_id, subject_id=subject_id)


def extract_features(img: RawImage, d: int = DEFAULT_DIM,
                     target_w: int = DEFAULT_WIDTH, target_h: int = DEFAULT_HEIGHT,
                     **meta) -> FeatureVector:
    """Full pipeline: resize, 2D-DCT, zigzag truncation to `d` values."""
    return zigzag_scan(dct2(normalize_geometry(img, target_w, target_h)), d, **meta)


# ---------------------------------------------------------------------------
# Feature CSV: subject_id,sample_id,modality,v0,...,v{d-1}

def format_float(x: float) -> str:
    return repr(float(x))


def write_feature_csv(path_or_buf, features: Sequence[FeatureVector]) -> None:
    if not features:
        raise ValueError("no features to write")
    d = features[0].dim
    own = not hasattr(path_or_buf, "write")
    fh = open(path_or_buf, "w", newline="", encoding="utf-8") if own else path_or_buf
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["subject_id", "sample_id", "modality"]
                        + [f"v{i}" for i in range(d)])
        for fv in features:
            if fv.dim != d:
                raise ValueError("inconsistent feature dimension")
            writer.writerow([fv.subject_id or "", fv.source_id, fv.modality]
                            + [format_float(v) for v in fv.values])
    finally:
        if own:
            fh.close()


def read_feature_csv(path_or_buf) -> list[FeatureVector]:
    if hasattr(path_or_buf, "read"):
        text = path_or_buf.read()
    else:
        text = Path(path_or_buf).read_text(encoding="utf-8")
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise FeatureFileError("empty feature file") from None
    if header[:3] != ["subject_id", "sample_id", "modality"] or len(header) < 4:
        raise FeatureFileError(f"unexpected header {header[:4]}")
    d = len(header) - 3
    if header[3:] != [f"v{i}" for i in range(d)]:
        raise FeatureFileError("value columns must be v0..v{d-1}")
    out = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != d + 3:
            raise FeatureFileError(f"line {lineno}: expected {d + 3} fields")
        try:
            values = np.array([float(v) for v in row[3:]])
        except ValueError:
            raise FeatureFileError(f"line {lineno}: non-numeric value") from None
        if not np.all(np.isfinite(values)):
            raise FeatureFileError(f"line {lineno}: non-finite value")
        out.append(FeatureVector(values, modality=row[2], source_id=row[1],
                                 subject_id=row[0] or None))
    return out


def group_by_subject(features: Iterable[FeatureVector]) -> dict[str, list[FeatureVector]]:
    """Group features by subject, keeping first-appearance order."""
    groups: dict[str, list[FeatureVector]] = {}
    for fv in features:
        if fv.subject_id is None:
            raise FeatureFileError(f"sample {fv.source_id!r} has no subject_id")
        groups.setdefault(fv.subject_id, []).append(fv)
    return groups
