"""Domain types and the deterministic encoding pipeline.

Raw media embeddings are averaged and unit-normalized into media
encodings; a template's media encodings are averaged and unit-normalized
into a single template encoding. All arithmetic is float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, InvalidArgument, ZeroNormError

ZERO_NORM_TOL = 1e-12
UNIT_NORM_TOL = 1e-6

IMAGE = "image"
VIDEO = "video"


def _as_matrix(frames) -> np.ndarray:
    arr = np.asarray(frames, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InvalidArgument("frames must be a nonempty (m, d) array")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgument("embeddings must be finite")
    return arr


def unit_normalize(v: np.ndarray) -> np.ndarray:
    n = float(np.linalg.norm(v))
    if n <= ZERO_NORM_TOL:
        raise ZeroNormError(f"vector norm {n!r} below {ZERO_NORM_TOL}")
    return v / n


@dataclass(frozen=True)
class MediaRecord:
    """One image or one video (a set of frame embeddings) of a subject."""

    media_id: str
    subject_id: str
    kind: str  # IMAGE or VIDEO
    frames: np.ndarray = field(repr=False)  # (m, d), float64

    def __post_init__(self):
        if not self.media_id or not self.subject_id:
            raise InvalidArgument("media_id and subject_id must be non-empty")
        if self.kind not in (IMAGE, VIDEO):
            raise InvalidArgument(f"unknown media kind {self.kind!r}")
        arr = _as_matrix(self.frames)
        if self.kind == IMAGE and arr.shape[0] != 1:
            raise InvalidArgument("an image has exactly one frame embedding")
        arr.flags.writeable = False
        object.__setattr__(self, "frames", arr)

    @property
    def dim(self) -> int:
        return self.frames.shape[1]


@dataclass(frozen=True)
class MediaEncoding:
    """Unit-normalized encoding of one media observation."""

    media_id: str
    vector: np.ndarray = field(repr=False)  # (d,), unit L2 norm

    def __post_init__(self):
        v = np.asarray(self.vector, dtype=np.float64)
        if v.ndim != 1 or v.size < 1:
            raise InvalidArgument("encoding vector must be 1-D and nonempty")
        if not np.all(np.isfinite(v)):
            raise InvalidArgument("encoding vector must be finite")
        if abs(float(np.linalg.norm(v)) - 1.0) > UNIT_NORM_TOL:
            raise InvalidArgument("encoding vector must have unit L2 norm")
        v.flags.writeable = False
        object.__setattr__(self, "vector", v)

    @property
    def dim(self) -> int:
        return self.vector.shape[0]


@dataclass(frozen=True)
class Template:
    """Identified set of media encodings for one subject.

    Media are kept sorted by media_id so that every downstream
    summation has one canonical order (bit-reproducibility).
    """

    template_id: str
    subject_id: str
    media: tuple[MediaEncoding, ...]

    def __post_init__(self):
        if not self.template_id or not self.subject_id:
            raise InvalidArgument("template_id and subject_id must be non-empty")
        media = tuple(sorted(self.media, key=lambda m: m.media_id))
        if len(media) < 1:
            raise InvalidArgument("template requires at least one media")
        ids = [m.media_id for m in media]
        if len(set(ids)) != len(ids):
            raise InvalidArgument("duplicate media_id within a template")
        d = media[0].dim
        if any(m.dim != d for m in media):
            raise DimensionMismatch("template media disagree on dimension")
        object.__setattr__(self, "media", media)

    @property
    def size(self) -> int:
        return len(self.media)

    @property
    def dim(self) -> int:
        return self.media[0].dim


@dataclass(frozen=True)
class TemplateEncoding:
    """Unit-normalized mean of a template's media encodings."""

    template_id: str
    vector: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.vector, dtype=np.float64)
        if abs(float(np.linalg.norm(v)) - 1.0) > UNIT_NORM_TOL:
            raise InvalidArgument("template encoding must have unit L2 norm")
        v.flags.writeable = False
        object.__setattr__(self, "vector", v)

    @property
    def dim(self) -> int:
        return self.vector.shape[0]


@dataclass(frozen=True)
class Gallery:
    """Set of enrolled templates; the subject label is the template's subject_id."""

    templates: tuple[Template, ...]

    def __post_init__(self):
        templates = tuple(self.templates)
        ids = [t.template_id for t in templates]
        if len(set(ids)) != len(ids):
            raise InvalidArgument("gallery template_ids must be unique")
        object.__setattr__(self, "templates", templates)

    def __len__(self) -> int:
        return len(self.templates)

    @property
    def subjects(self) -> set[str]:
        return {t.subject_id for t in self.templates}


def encode_media(record: MediaRecord) -> MediaEncoding:
    """Average the frame embeddings and unit normalize.

    For an image this is just unit normalization of its single embedding.
    """
    mean = record.frames.mean(axis=0)
    return MediaEncoding(record.media_id, unit_normalize(mean))


def encode_template(t: Template) -> TemplateEncoding:
    """Average the media encodings (canonical media_id order) and unit normalize."""
    mean = np.mean([m.vector for m in t.media], axis=0)
    return TemplateEncoding(t.template_id, unit_normalize(mean))


def baseline_similarity(p: TemplateEncoding, q: TemplateEncoding) -> float:
    """Negative L2 distance between two unit template encodings; in [-2, 0]."""
    if p.dim != q.dim:
        raise DimensionMismatch(f"encoding dims differ: {p.dim} vs {q.dim}")
    return -float(np.linalg.norm(p.vector - q.vector))


def build_template(template_id: str, records: Sequence[MediaRecord]) -> Template:
    """Encode records and assemble a template, checking subject consistency."""
    if not records:
        raise InvalidArgument("template requires at least one media record")
    subjects = {r.subject_id for r in records}
    if len(subjects) != 1:
        raise InvalidArgument(f"records for template {template_id!r} span subjects {sorted(subjects)}")
    return Template(template_id, records[0].subject_id, tuple(encode_media(r) for r in records))
