"""Synthetic embedding generator and brute-force oracles.

Subjects are random unit centroids; each media is the centroid plus
isotropic gaussian noise, unit-normalized downstream. Video frames add a
second noise layer around a media-level latent. Everything is seeded and
bit-reproducible; frame values are quantized to float32 so that datasets
survive a binary save/load roundtrip exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import svm
from .core import IMAGE, VIDEO, MediaRecord, Template, build_template
from .errors import DimensionTooLarge, InvalidConfig

TRAIN = "train"
EVAL = "eval"


@dataclass(frozen=True)
class SynthConfig:
    d: int = 64
    num_subjects: int = 50
    templates_per_subject: int = 2
    media_per_template: tuple[int, int] = (1, 1)  # inclusive [a, b]
    frames_per_video: int = 5
    video_fraction: float = 0.0
    noise_sigma: float = 0.3
    # optional subject-independent nuisance subspace shared by all media;
    # discriminative adaptation can learn to discount it, plain cosine
    # similarity cannot, which mirrors the structured noise of real
    # embeddings (with 0 the noise is isotropic and the cosine baseline
    # is already optimal)
    nuisance_dim: int = 0
    nuisance_sigma: float = 1.0
    train_fraction: float = 0.0
    seed: int = 0

    def __post_init__(self):
        a, b = self.media_per_template
        if self.d < 2 or self.num_subjects < 2:
            raise InvalidConfig("need d >= 2 and num_subjects >= 2")
        if self.templates_per_subject < 1:
            raise InvalidConfig("templates_per_subject must be >= 1")
        if not (1 <= a <= b):
            raise InvalidConfig("media_per_template must satisfy 1 <= a <= b")
        if self.frames_per_video < 1:
            raise InvalidConfig("frames_per_video must be >= 1")
        if not 0.0 <= self.video_fraction <= 1.0:
            raise InvalidConfig("video_fraction must lie in [0, 1]")
        if not self.noise_sigma > 0:
            raise InvalidConfig("noise_sigma must be positive")
        if not 0.0 <= self.train_fraction < 1.0:
            raise InvalidConfig("train_fraction must lie in [0, 1)")
        if self.nuisance_dim < 0 or self.nuisance_dim >= self.d:
            raise InvalidConfig("nuisance_dim must lie in [0, d)")
        if not self.nuisance_sigma > 0:
            raise InvalidConfig("nuisance_sigma must be positive")


@dataclass(frozen=True)
class SynthDataset:
    templates: tuple[Template, ...]
    records: tuple[tuple[str, MediaRecord], ...] = field(repr=False)  # (template_id, record)
    subject_splits: dict[str, str]  # subject_id -> TRAIN | EVAL

    def split_templates(self, label: str) -> list[Template]:
        return [t for t in self.templates if self.subject_splits[t.subject_id] == label]


def _f32(x: np.ndarray) -> np.ndarray:
    return x.astype(np.float32).astype(np.float64)


def generate(cfg: SynthConfig) -> SynthDataset:
    """Deterministic synthetic dataset; per-subject RNG streams keyed
    (seed, subject index) so generation order never matters."""
    templates = []
    records = []
    a, b = cfg.media_per_template
    n_train = int(round(cfg.train_fraction * cfg.num_subjects))
    basis = None
    if cfg.nuisance_dim:
        rng = np.random.default_rng([cfg.seed, 999983])
        basis, _ = np.linalg.qr(rng.standard_normal((cfg.d, cfg.nuisance_dim)))
    splits = {}
    for s in range(cfg.num_subjects):
        rng = np.random.default_rng([cfg.seed, s])
        subject_id = f"S{s:04d}"
        splits[subject_id] = TRAIN if s < n_train else EVAL
        centroid = rng.standard_normal(cfg.d)
        centroid /= np.linalg.norm(centroid)
        for t in range(cfg.templates_per_subject):
            template_id = f"{subject_id}_T{t}"
            k = int(rng.integers(a, b + 1))
            media = []
            for m in range(k):
                media_id = f"{template_id}_M{m:03d}"
                latent = centroid + cfg.noise_sigma * rng.standard_normal(cfg.d)
                if basis is not None:
                    latent = latent + basis @ (
                        cfg.nuisance_sigma * rng.standard_normal(cfg.nuisance_dim))
                if rng.random() < cfg.video_fraction:
                    frames = latent + cfg.noise_sigma * rng.standard_normal(
                        (cfg.frames_per_video, cfg.d))
                    rec = MediaRecord(media_id, subject_id, VIDEO, _f32(frames))
                else:
                    rec = MediaRecord(media_id, subject_id, IMAGE, _f32(latent[None, :]))
                media.append(rec)
                records.append((template_id, rec))
            templates.append(build_template(template_id, media))
    return SynthDataset(tuple(templates), tuple(records), splits)


def mated_pairs(templates) -> list[tuple[Template, Template]]:
    """All same-subject template pairs (each unordered pair once)."""
    by_subject: dict[str, list[Template]] = {}
    for t in templates:
        by_subject.setdefault(t.subject_id, []).append(t)
    pairs = []
    for subj in sorted(by_subject):
        group = sorted(by_subject[subj], key=lambda t: t.template_id)
        for i in range(len(group)):
            for j in range(i + 1, len(group)):
                pairs.append((group[i], group[j]))
    return pairs


def nonmated_pairs(templates, count: int, seed: int) -> list[tuple[Template, Template]]:
    """Seeded sample of cross-subject template pairs, without replacement."""
    ts = sorted(templates, key=lambda t: t.template_id)
    rng = np.random.default_rng(seed)
    pairs = []
    seen = set()
    attempts = 0
    while len(pairs) < count and attempts < 100 * count:
        i, j = rng.integers(0, len(ts), size=2)
        attempts += 1
        if i == j or ts[i].subject_id == ts[j].subject_id:
            continue
        key = (min(i, j), max(i, j))
        if key in seen:
            continue
        seen.add(key)
        pairs.append((ts[key[0]], ts[key[1]]))
    return pairs


def brute_force_svm(problem: svm.SvmProblem,
                    bound: float = 5.0,
                    grid_points: int = 9,
                    max_sweeps: int = 300) -> tuple[np.ndarray, float]:
    """Independent minimizer for small problems: coarse grid search over
    [-bound, bound]^(d+1), then cyclic coordinate-wise golden-section
    refinement. The objective is strictly convex, so this converges to
    the global minimum.
    """
    if problem.dim > 3 or problem.n_pos + problem.n_neg > 10:
        raise DimensionTooLarge("oracle restricted to d <= 3 and <= 10 samples")
    x, y, cost = problem.augmented()
    dim = x.shape[1]

    def obj(w):
        h = np.maximum(0.0, 1.0 - y * (x @ w))
        return 0.5 * float(w @ w) + float(cost @ (h * h))

    # coarse grid
    axes = np.meshgrid(*[np.linspace(-bound, bound, grid_points)] * dim,
                       indexing="ij")
    grid = np.stack([a.ravel() for a in axes], axis=1)
    values = [obj(w) for w in grid]
    w = grid[int(np.argmin(values))].copy()
    best = obj(w)

    phi = (np.sqrt(5.0) - 1.0) / 2.0

    def golden(line, lo, hi, iters=90):
        c1 = hi - phi * (hi - lo)
        c2 = lo + phi * (hi - lo)
        f1, f2 = line(c1), line(c2)
        for _ in range(iters):
            if f1 <= f2:
                hi, c2, f2 = c2, c1, f1
                c1 = hi - phi * (hi - lo)
                f1 = line(c1)
            else:
                lo, c1, f1 = c1, c2, f2
                c2 = lo + phi * (hi - lo)
                f2 = line(c2)
        return 0.5 * (lo + hi)

    for _ in range(max_sweeps):
        previous = best
        start = w.copy()
        for k in range(dim):
            def line(v, k=k):
                w[k] = v
                return obj(w)

            w[k] = golden(line, -bound, bound)
        # pattern move along the sweep displacement; coordinate descent
        # alone zigzags badly on correlated problems
        direction = w - start
        if np.linalg.norm(direction) > 0:
            t = golden(lambda t: obj(start + t * direction), -1.0, 8.0)
            candidate = start + t * direction
            if obj(candidate) < obj(w):
                w = candidate
        best = obj(w)
        if previous - best < 1e-15 * (1.0 + abs(best)):
            break
    return w, best


def random_problem(seed: int, d: int = 2, n_pos: int = 2, n_neg: int = 5,
                   c: float = svm.DEFAULT_C, scale: float = 1.0) -> svm.SvmProblem:
    """Seeded random SVM problem for oracle comparisons."""
    rng = np.random.default_rng(seed)
    pos = rng.standard_normal((n_pos, d)) * scale + 1.0
    neg = rng.standard_normal((n_neg, d)) * scale - 1.0
    return svm.SvmProblem(pos, neg, c)
