"""Probe adaptation, gallery adaptation and classifier fusion.

Each template gets its own linear SVM: its media encodings are the
positives, a large subject-disjoint pool the negatives. A pair score is
a convex combination of the two directional margins, alpha * P(q) +
(1 - alpha) * Q(p).
"""

from __future__ import annotations

import enum
import threading
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from . import svm
from .core import Gallery, MediaEncoding, Template, TemplateEncoding, encode_template
from .errors import (AllSameSubject, DimensionMismatch, EmptyNegativeSet,
                     GalleryTooSmall, InvalidArgument)
from .metrics import PairScores, ScoreMatrix
from .negsets import NegativePool, NegativeSource


class FusionVariant(str, enum.Enum):
    AVERAGE = "average"
    WINNER_TAKE_ALL = "wta"
    TEMPLATE_WEIGHTED = "template-weighted"
    GEOMETRIC_AVERAGE = "geometric"


@dataclass(frozen=True)
class FusionStrategy:
    variant: FusionVariant = FusionVariant.AVERAGE
    alpha: float | None = None            # override, AVERAGE only
    larger_template_wins: bool = True     # WTA convention; flip for the study

    def __post_init__(self):
        if self.alpha is not None:
            if self.variant is not FusionVariant.AVERAGE:
                raise InvalidArgument("alpha override is only valid with average fusion")
            if not 0.0 <= self.alpha <= 1.0:
                raise InvalidArgument("alpha must lie in [0, 1]")


@dataclass(frozen=True)
class AdaptedClassifier:
    template_id: str
    classifier: svm.LinearClassifier
    template_size: int
    negative_source: NegativeSource

    def __post_init__(self):
        if self.template_size < 1:
            raise InvalidArgument("template_size must be >= 1")


def _resolve_negatives(t: Template, negatives) -> tuple[tuple[MediaEncoding, ...], NegativeSource]:
    if isinstance(negatives, NegativePool):
        encs = negatives.excluding_subject(t.subject_id)
        return encs, negatives.source
    return tuple(negatives), NegativeSource.DISJOINT_TRAINING_SET


def adapt_probe(t: Template,
                negatives: NegativePool | Sequence[MediaEncoding],
                c: float = svm.DEFAULT_C,
                tol: float = svm.DEFAULT_TOL,
                max_iter: int = svm.DEFAULT_MAX_ITER) -> AdaptedClassifier:
    """Train a per-template SVM: its media as positives, the pool as negatives.

    When a NegativePool is given, same-subject entries are filtered out
    first (label-leak guard).
    """
    encs, source = _resolve_negatives(t, negatives)
    if not encs:
        raise EmptyNegativeSet(f"no usable negatives for template {t.template_id!r}")
    if encs[0].dim != t.dim:
        raise DimensionMismatch(
            f"negative dim {encs[0].dim} != template dim {t.dim}")
    positives = np.vstack([m.vector for m in t.media])
    neg = np.vstack([e.vector for e in encs])
    clf = svm.train(svm.SvmProblem(positives, neg, c), tol=tol, max_iter=max_iter)
    return AdaptedClassifier(t.template_id, clf, t.size, source)


def adapt_gallery(g: Gallery,
                  c: float = svm.DEFAULT_C,
                  tol: float = svm.DEFAULT_TOL,
                  max_iter: int = svm.DEFAULT_MAX_ITER) -> dict[str, AdaptedClassifier]:
    """One classifier per gallery template; negatives are all media of
    other-subject gallery templates."""
    if len(g) < 2:
        raise GalleryTooSmall("gallery adaptation requires at least 2 templates")
    out = {}
    for t in g.templates:
        neg = [m for other in g.templates if other.subject_id != t.subject_id
               for m in other.media]
        if not neg:
            raise AllSameSubject(
                f"no non-mated gallery media for template {t.template_id!r}")
        positives = np.vstack([m.vector for m in t.media])
        negatives = np.vstack([e.vector for e in neg])
        clf = svm.train(svm.SvmProblem(positives, negatives, c), tol=tol, max_iter=max_iter)
        out[t.template_id] = AdaptedClassifier(t.template_id, clf, t.size,
                                               NegativeSource.GALLERY_NONMATES)
    return out


def _alpha(f: FusionStrategy, size_p: int, size_q: int) -> float:
    if f.variant is FusionVariant.AVERAGE:
        return 0.5 if f.alpha is None else f.alpha
    if f.variant is FusionVariant.TEMPLATE_WEIGHTED:
        return size_p / (size_p + size_q)
    if f.variant is FusionVariant.WINNER_TAKE_ALL:
        if size_p == size_q:
            return 0.5
        p_larger = size_p > size_q
        return 1.0 if p_larger == f.larger_template_wins else 0.0
    # geometric average fuses geometric margins with alpha = 0.5
    return 0.5


def similarity(c_p: AdaptedClassifier, p: TemplateEncoding,
               c_q: AdaptedClassifier, q: TemplateEncoding,
               f: FusionStrategy = FusionStrategy()) -> float:
    """Fused pair score alpha * P(q) + (1 - alpha) * Q(p)."""
    if c_p.template_id != p.template_id or c_q.template_id != q.template_id:
        raise InvalidArgument("encodings do not match the classifiers' templates")
    margin = (svm.geometric_margin
              if f.variant is FusionVariant.GEOMETRIC_AVERAGE
              else svm.functional_margin)
    alpha = _alpha(f, c_p.template_size, c_q.template_size)
    return alpha * margin(c_p.classifier, q.vector) + (1.0 - alpha) * margin(c_q.classifier, p.vector)


def similarity_per_media(c_p: AdaptedClassifier, tp: Template,
                         c_q: AdaptedClassifier, tq: Template,
                         f: FusionStrategy = FusionStrategy()) -> float:
    """Variant scoring: average each classifier's margin over the other
    template's individual media encodings instead of one template encoding."""
    margin = (svm.geometric_margin
              if f.variant is FusionVariant.GEOMETRIC_AVERAGE
              else svm.functional_margin)
    alpha = _alpha(f, c_p.template_size, c_q.template_size)
    p_side = float(np.mean([margin(c_p.classifier, m.vector) for m in tq.media]))
    q_side = float(np.mean([margin(c_q.classifier, m.vector) for m in tp.media]))
    return alpha * p_side + (1.0 - alpha) * q_side


class ClassifierCache:
    """Insert-or-get cache of adapted classifiers, keyed by template_id.

    Negatives and C are fixed per scoring run, so the template id alone
    identifies the training problem. Thread safe; ``trainings`` counts
    actual solver invocations.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._store: dict[str, AdaptedClassifier] = {}
        self.trainings = 0

    def get_or_train(self, t: Template,
                     train_fn: Callable[[Template], AdaptedClassifier]) -> AdaptedClassifier:
        with self._lock:
            cached = self._store.get(t.template_id)
        if cached is not None:
            return cached
        built = train_fn(t)
        with self._lock:
            if t.template_id not in self._store:
                self._store[t.template_id] = built
                self.trainings += 1
            return self._store[t.template_id]


def score_verification_pairs(pairs: Sequence[tuple[Template, Template]],
                             negatives: NegativePool | Sequence[MediaEncoding],
                             c: float = svm.DEFAULT_C,
                             f: FusionStrategy = FusionStrategy(),
                             tol: float = svm.DEFAULT_TOL,
                             max_iter: int = svm.DEFAULT_MAX_ITER,
                             per_media_margins: bool = False,
                             cache: ClassifierCache | None = None) -> PairScores:
    """Probe-adapt every distinct template once and score each pair."""
    if not pairs:
        raise InvalidArgument("pair list must be nonempty")
    if cache is None:
        cache = ClassifierCache()

    def train_fn(t: Template) -> AdaptedClassifier:
        return adapt_probe(t, negatives, c=c, tol=tol, max_iter=max_iter)

    encodings: dict[str, TemplateEncoding] = {}
    probe_ids, ref_ids, scores, mated = [], [], [], []
    for tp, tq in pairs:
        c_p = cache.get_or_train(tp, train_fn)
        c_q = cache.get_or_train(tq, train_fn)
        if per_media_margins:
            s = similarity_per_media(c_p, tp, c_q, tq, f)
        else:
            for t in (tp, tq):
                if t.template_id not in encodings:
                    encodings[t.template_id] = encode_template(t)
            s = similarity(c_p, encodings[tp.template_id],
                           c_q, encodings[tq.template_id], f)
        probe_ids.append(tp.template_id)
        ref_ids.append(tq.template_id)
        scores.append(s)
        mated.append(tp.subject_id == tq.subject_id)
    return PairScores(tuple(probe_ids), tuple(ref_ids),
                      np.asarray(scores), np.asarray(mated))


def score_search(probes: Sequence[Template],
                 g: Gallery,
                 probe_negatives: NegativePool | Sequence[MediaEncoding],
                 c: float = svm.DEFAULT_C,
                 f: FusionStrategy = FusionStrategy(),
                 tol: float = svm.DEFAULT_TOL,
                 max_iter: int = svm.DEFAULT_MAX_ITER,
                 gallery_classifiers: Mapping[str, AdaptedClassifier] | None = None,
                 ) -> ScoreMatrix:
    """Full probes x gallery score matrix.

    Gallery templates are gallery-adapted (negatives from other-subject
    gallery media); probes are probe-adapted against probe_negatives.
    """
    if gallery_classifiers is None:
        gallery_classifiers = adapt_gallery(g, c=c, tol=tol, max_iter=max_iter)
    probe_ids = tuple(t.template_id for t in probes)
    gallery_ids = tuple(t.template_id for t in g.templates)
    scores = np.zeros((len(probes), len(g)))
    mated = np.zeros_like(scores, dtype=bool)
    gal_enc = {t.template_id: encode_template(t) for t in g.templates}
    for i, tp in enumerate(probes):
        c_p = adapt_probe(tp, probe_negatives, c=c, tol=tol, max_iter=max_iter)
        p_enc = encode_template(tp)
        for j, tx in enumerate(g.templates):
            scores[i, j] = similarity(c_p, p_enc,
                                      gallery_classifiers[tx.template_id],
                                      gal_enc[tx.template_id], f)
            mated[i, j] = tp.subject_id == tx.subject_id
    return ScoreMatrix(probe_ids, gallery_ids, scores, mated)
