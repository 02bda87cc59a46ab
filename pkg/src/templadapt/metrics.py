"""Biometric evaluation: 1:1 ROC/DET, 1:N open-set DET, CMC, operating
points, template-size buckets and multi-split aggregation.

All curves are step functions sampled at every distinct score; no
interpolation happens anywhere, and operating points use a conservative
step convention (the point with the largest achievable x <= target).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import (DegenerateInput, DimensionMismatch, InsufficientSplits,
                     InvalidArgument, MissingMate, Unachievable)

OP_CONVENTION = "largest-x-at-most-target"


@dataclass(frozen=True)
class PairScores:
    """Flat 1:1 scores: one row per (probe, reference) pair."""

    probe_ids: tuple[str, ...]
    reference_ids: tuple[str, ...]
    scores: np.ndarray = field(repr=False)  # (n,)
    mated: np.ndarray = field(repr=False)   # (n,) bool

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        mated = np.asarray(self.mated, dtype=bool)
        n = len(self.probe_ids)
        if len(self.reference_ids) != n or scores.shape != (n,) or mated.shape != (n,):
            raise InvalidArgument("pair arrays must share one length")
        if n and not np.all(np.isfinite(scores)):
            raise InvalidArgument("scores must be finite")
        scores.flags.writeable = False
        mated.flags.writeable = False
        object.__setattr__(self, "probe_ids", tuple(self.probe_ids))
        object.__setattr__(self, "reference_ids", tuple(self.reference_ids))
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "mated", mated)

    def __len__(self) -> int:
        return len(self.probe_ids)

    def subset(self, mask: np.ndarray) -> "PairScores":
        idx = np.flatnonzero(mask)
        return PairScores(tuple(self.probe_ids[i] for i in idx),
                          tuple(self.reference_ids[i] for i in idx),
                          self.scores[idx], self.mated[idx])


@dataclass(frozen=True)
class ScoreMatrix:
    """Dense 1:N scores: probes x gallery entries with a mated mask."""

    probe_ids: tuple[str, ...]
    gallery_ids: tuple[str, ...]
    scores: np.ndarray = field(repr=False)  # (P, G)
    mated: np.ndarray = field(repr=False)   # (P, G) bool

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        mated = np.asarray(self.mated, dtype=bool)
        shape = (len(self.probe_ids), len(self.gallery_ids))
        if scores.shape != shape or mated.shape != shape:
            raise DimensionMismatch("score/mask shape must be (probes, gallery)")
        if scores.size and not np.all(np.isfinite(scores)):
            raise InvalidArgument("scores must be finite")
        scores.flags.writeable = False
        mated.flags.writeable = False
        object.__setattr__(self, "probe_ids", tuple(self.probe_ids))
        object.__setattr__(self, "gallery_ids", tuple(self.gallery_ids))
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "mated", mated)


@dataclass(frozen=True)
class CurvePoint:
    threshold: float
    x: float
    y: float


@dataclass(frozen=True)
class OperatingPoint:
    y: float
    achieved_x: float
    threshold: float
    convention: str = OP_CONVENTION


def roc_11(pairs: PairScores) -> list[CurvePoint]:
    """1:1 ROC as (FMR, TAR) step points at every distinct threshold.

    At threshold t: FMR = fraction of non-mated pairs with score >= t,
    TAR = fraction of mated pairs with score >= t (= 1 - FNMR).
    """
    mated = pairs.scores[pairs.mated]
    nonmated = pairs.scores[~pairs.mated]
    if mated.size == 0 or nonmated.size == 0:
        raise DegenerateInput("need at least one mated and one non-mated pair")
    mated = np.sort(mated)
    nonmated = np.sort(nonmated)
    thresholds = np.unique(np.concatenate([mated, nonmated]))
    points = []
    for t in thresholds:
        fmr = 1.0 - np.searchsorted(nonmated, t, side="left") / nonmated.size
        tar = 1.0 - np.searchsorted(mated, t, side="left") / mated.size
        points.append(CurvePoint(float(t), float(fmr), float(tar)))
    points.append(CurvePoint(float("inf"), 0.0, 0.0))
    return points


def operating_point(curve: Sequence[CurvePoint], target_x: float) -> OperatingPoint:
    """y at the largest achievable x <= target_x; no interpolation."""
    if not curve:
        raise DegenerateInput("empty curve")
    if not 0.0 <= target_x <= 1.0:
        raise InvalidArgument("target_x must lie in [0, 1]")
    feasible = [p for p in curve if p.x <= target_x]
    if not feasible:
        raise Unachievable(f"no curve point with x <= {target_x}")
    best_x = max(p.x for p in feasible)
    at_x = [p for p in feasible if p.x == best_x]
    best = max(at_x, key=lambda p: p.y)
    return OperatingPoint(best.y, best.x, best.threshold)


def _ranked_columns(scores: ScoreMatrix, row: int) -> list[int]:
    """Gallery column indices for one probe, best score first, ties by id."""
    order = sorted(range(len(scores.gallery_ids)),
                   key=lambda j: (-scores.scores[row, j], scores.gallery_ids[j]))
    return order


def cmc(scores: ScoreMatrix) -> list[tuple[int, float]]:
    """Closed-set CMC: recall of the mated subject within the top-K candidates.

    Every probe row must contain at least one mated gallery entry.
    """
    n_gallery = len(scores.gallery_ids)
    if len(scores.probe_ids) == 0 or n_gallery == 0:
        raise DegenerateInput("empty score matrix")
    ranks = []
    for i in range(len(scores.probe_ids)):
        if not scores.mated[i].any():
            raise MissingMate(f"probe {scores.probe_ids[i]!r} has no gallery mate")
        order = _ranked_columns(scores, i)
        rank = next(pos for pos, j in enumerate(order, start=1) if scores.mated[i, j])
        ranks.append(rank)
    ranks = np.asarray(ranks)
    return [(k, float(np.mean(ranks <= k))) for k in range(1, n_gallery + 1)]


def det_1n(scores: ScoreMatrix, top_l: int = 20) -> list[CurvePoint]:
    """Open-set 1:N DET: (FPIR, FNIR) over a top-L candidate list.

    A mated search is a hit at threshold t only if its mate is BOTH within
    the top-L candidates AND scored >= t. A non-mated search is a false
    positive at t if any of its top-L candidates scores >= t. The leading
    point (threshold -inf) reduces FNIR to the rank-L miss rate.
    """
    if top_l < 1:
        raise InvalidArgument("candidate list size must be >= 1")
    mated_rows = [i for i in range(len(scores.probe_ids)) if scores.mated[i].any()]
    nonmated_rows = [i for i in range(len(scores.probe_ids)) if not scores.mated[i].any()]
    if not mated_rows or not nonmated_rows:
        raise DegenerateInput("need both mated and non-mated searches")

    hit_scores = []
    for i in mated_rows:
        top = _ranked_columns(scores, i)[:top_l]
        mate_scores = [scores.scores[i, j] for j in top if scores.mated[i, j]]
        hit_scores.append(max(mate_scores) if mate_scores else -np.inf)
    hit_scores = np.asarray(hit_scores)

    alarm_scores = []
    for i in nonmated_rows:
        top = _ranked_columns(scores, i)[:top_l]
        alarm_scores.append(max(scores.scores[i, j] for j in top))
    alarm_scores = np.asarray(alarm_scores)

    points = [CurvePoint(float("-inf"),
                         1.0,
                         float(np.mean(np.isneginf(hit_scores))))]
    finite = np.unique(np.concatenate([hit_scores[np.isfinite(hit_scores)],
                                       alarm_scores]))
    for t in finite:
        fpir = float(np.mean(alarm_scores >= t))
        fnir = float(np.mean(hit_scores < t))
        points.append(CurvePoint(float(t), fpir, fnir))
    points.append(CurvePoint(float("inf"), 0.0, 1.0))
    return points


def aggregate_splits(values: Sequence[float],
                     with_std: bool = True) -> tuple[float, float | None]:
    """Mean and sample standard deviation (n-1 denominator) across splits."""
    if len(values) < 1:
        raise InsufficientSplits("need at least one split for the mean")
    mean = float(np.mean(values))
    if not with_std:
        return mean, None
    if len(values) < 2:
        raise InsufficientSplits("need at least two splits for a standard deviation")
    return mean, float(np.std(values, ddof=1))


@dataclass(frozen=True)
class BucketStats:
    lo: int
    hi: int
    num_pairs: int
    num_mated: int
    mated_mean: float | None
    mated_std: float | None
    tar: dict[float, float | None]
    empty: bool


def bucket_by_template_size(pairs: PairScores,
                            sizes: Mapping[str, int],
                            edges: Sequence[int] = (1, 2, 4, 8, 16, 32),
                            fmr_targets: Sequence[float] = (1e-2, 1e-3),
                            ) -> list[BucketStats]:
    """Per-bucket mated-score statistics and TAR at the given FMR targets.

    Pairs fall into half-open buckets [lo, hi) by max(|P|, |Q|). Empty
    buckets and buckets missing a score class are reported with absent
    statistics, not errors.
    """
    if any(b >= c for b, c in zip(edges, edges[1:])) or len(edges) < 2:
        raise InvalidArgument("bucket edges must be strictly increasing")
    maxsize = np.asarray([max(sizes[p], sizes[r])
                          for p, r in zip(pairs.probe_ids, pairs.reference_ids)])
    out = []
    for lo, hi in zip(edges, edges[1:]):
        mask = (maxsize >= lo) & (maxsize < hi)
        sub = pairs.subset(mask)
        mated_scores = sub.scores[sub.mated]
        mated_mean = float(np.mean(mated_scores)) if mated_scores.size else None
        mated_std = float(np.std(mated_scores, ddof=1)) if mated_scores.size > 1 else None
        tar: dict[float, float | None] = {}
        try:
            curve = roc_11(sub)
            for target in fmr_targets:
                try:
                    tar[target] = operating_point(curve, target).y
                except Unachievable:
                    tar[target] = None
        except DegenerateInput:
            tar = {target: None for target in fmr_targets}
        out.append(BucketStats(lo, hi, len(sub), int(sub.mated.sum()),
                               mated_mean, mated_std, tar, empty=len(sub) == 0))
    return out
