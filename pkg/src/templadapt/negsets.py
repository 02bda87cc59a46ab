"""Negative feature pool construction.

Pools keep subject ids alongside encodings so that adaptation can
enforce label-leak checks (a template must never see a same-subject
feature as a negative).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import MediaEncoding, Template
from .errors import (DimensionMismatch, EmptyInput, InsufficientData,
                     SubjectOverlapError)


class NegativeSource(str, enum.Enum):
    DISJOINT_TRAINING_SET = "trn"
    GALLERY_NONMATES = "neg"
    UNION = "union"
    EXTERNAL = "external"


@dataclass(frozen=True)
class NegativePool:
    source: NegativeSource
    encodings: tuple[MediaEncoding, ...]
    subject_ids: tuple[str, ...]

    def __post_init__(self):
        encodings = tuple(self.encodings)
        subject_ids = tuple(self.subject_ids)
        if not encodings:
            raise EmptyInput("negative pool must be nonempty")
        if len(encodings) != len(subject_ids):
            raise EmptyInput("subject_ids must parallel encodings")
        d = encodings[0].dim
        if any(e.dim != d for e in encodings):
            raise DimensionMismatch("pool encodings disagree on dimension")
        object.__setattr__(self, "encodings", encodings)
        object.__setattr__(self, "subject_ids", subject_ids)

    def __len__(self) -> int:
        return len(self.encodings)

    @property
    def dim(self) -> int:
        return self.encodings[0].dim

    @property
    def subjects(self) -> set[str]:
        return set(self.subject_ids)

    def check_disjoint(self, eval_subjects: Iterable[str]) -> None:
        overlap = self.subjects & set(eval_subjects)
        if overlap:
            raise SubjectOverlapError(
                f"pool subjects overlap evaluation subjects: {sorted(overlap)[:5]}")

    def excluding_subject(self, subject_id: str) -> tuple[MediaEncoding, ...]:
        return tuple(e for e, s in zip(self.encodings, self.subject_ids)
                     if s != subject_id)


def build_training_pool(training_templates: Sequence[Template],
                        eval_subjects: Iterable[str] | None = None) -> NegativePool:
    """All media encodings of a subject-disjoint training split."""
    if not training_templates:
        raise EmptyInput("no training templates")
    encodings, subjects = [], []
    for t in training_templates:
        for m in t.media:
            encodings.append(m)
            subjects.append(t.subject_id)
    pool = NegativePool(NegativeSource.DISJOINT_TRAINING_SET,
                        tuple(encodings), tuple(subjects))
    if eval_subjects is not None:
        pool.check_disjoint(eval_subjects)
    return pool


def gallery_pool(templates: Sequence[Template]) -> NegativePool:
    """Media encodings of gallery templates, tagged as gallery non-mates."""
    if not templates:
        raise EmptyInput("no gallery templates")
    encodings, subjects = [], []
    for t in templates:
        for m in t.media:
            encodings.append(m)
            subjects.append(t.subject_id)
    return NegativePool(NegativeSource.GALLERY_NONMATES,
                        tuple(encodings), tuple(subjects))


def build_external_pool(encodings: Sequence[MediaEncoding],
                        subject_ids: Sequence[str],
                        per_class_cap: int,
                        target_size: int,
                        seed: int) -> NegativePool:
    """Seeded class-balanced sample of an external feature set.

    Items are grouped by class, canonically sorted, shuffled per class
    with a seeded generator, then drawn round-robin over classes sorted
    by id (up to per_class_cap each) until target_size is reached.
    """
    if per_class_cap < 1 or target_size < 1:
        raise InsufficientData("per_class_cap and target_size must be >= 1")
    if len(encodings) != len(subject_ids):
        raise EmptyInput("subject_ids must parallel encodings")

    by_class: dict[str, list[MediaEncoding]] = {}
    for enc, sid in zip(encodings, subject_ids):
        by_class.setdefault(sid, []).append(enc)

    rng = np.random.default_rng(seed)
    queues = []
    for sid in sorted(by_class):
        items = sorted(by_class[sid], key=lambda e: e.media_id)
        order = rng.permutation(len(items))
        queues.append((sid, [items[i] for i in order[:per_class_cap]]))

    available = sum(len(q) for _, q in queues)
    if available < target_size:
        raise InsufficientData(
            f"only {available} items available after capping, need {target_size}")

    picked_enc, picked_sid = [], []
    round_idx = 0
    while len(picked_enc) < target_size:
        for sid, items in queues:
            if round_idx < len(items):
                picked_enc.append(items[round_idx])
                picked_sid.append(sid)
                if len(picked_enc) == target_size:
                    break
        round_idx += 1
    return NegativePool(NegativeSource.EXTERNAL, tuple(picked_enc), tuple(picked_sid))


def union_pool(a: NegativePool, b: NegativePool | None) -> NegativePool:
    """Concatenation with duplicates (by media_id) removed; b after a.

    b may be None (an empty contribution), yielding a copy of a tagged UNION.
    """
    if b is None:
        return NegativePool(NegativeSource.UNION, a.encodings, a.subject_ids)
    if a.dim != b.dim:
        raise DimensionMismatch(f"pool dims differ: {a.dim} vs {b.dim}")
    seen: set[str] = set()
    encodings, subjects = [], []
    for enc, sid in zip(a.encodings + b.encodings, a.subject_ids + b.subject_ids):
        if enc.media_id in seen:
            continue
        seen.add(enc.media_id)
        encodings.append(enc)
        subjects.append(sid)
    return NegativePool(NegativeSource.UNION, tuple(encodings), tuple(subjects))
