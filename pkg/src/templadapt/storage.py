"""Binary embedding matrices, JSON-lines manifests, protocol CSVs,
classifier persistence and score/curve export.

Matrix files: 16-byte header (magic "TADP", version, rows, dim as
little-endian uint32) followed by rows*dim little-endian floats,
row-major. Embedding matrices store float32; classifier weights store
float64 so save/load is bit-exact (the sidecar records the dtype).
Computation is float64 everywhere after ingestion.
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import svm
from .adapt import AdaptedClassifier
from .core import IMAGE, VIDEO, MediaRecord, Template, build_template
from .errors import (CorruptHeader, DanglingTemplateRef, InvalidArgument,
                     RangeOverlap, SubjectOverlapError, VersionMismatch)
from .metrics import CurvePoint, PairScores, ScoreMatrix
from .negsets import NegativeSource

MAGIC = b"TADP"
VERSION = 1
_HEADER = struct.Struct("<4sIII")

ROLE_GALLERY = "gallery"
ROLE_PROBE_MATED = "probe_mated"
ROLE_PROBE_NONMATED = "probe_nonmated"
ROLE_TRAIN = "train"
ROLES = (ROLE_GALLERY, ROLE_PROBE_MATED, ROLE_PROBE_NONMATED, ROLE_TRAIN)


def _fmt(v: float) -> str:
    return format(v, ".17g")


# ---------------------------------------------------------------- matrices

def write_matrix(path, arr: np.ndarray, dtype: str = "<f4") -> None:
    arr = np.ascontiguousarray(arr, dtype=dtype)
    if arr.ndim != 2:
        raise InvalidArgument("matrix must be 2-D")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, arr.shape[0], arr.shape[1]))
        fh.write(arr.tobytes())


def read_matrix(path, dtype: str = "<f4") -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise CorruptHeader(f"{path}: file shorter than header")
    magic, version, rows, dim = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise CorruptHeader(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise VersionMismatch(f"{path}: unsupported version {version}")
    itemsize = np.dtype(dtype).itemsize
    expected = _HEADER.size + itemsize * rows * dim
    if len(data) < expected:
        raise CorruptHeader(
            f"{path}: expected at least {expected} bytes, found {len(data)}")
    body = np.frombuffer(data, dtype=dtype, count=rows * dim, offset=_HEADER.size)
    return body.reshape(rows, dim).copy()


def _read_matrix_strict(path) -> np.ndarray:
    # embedding matrices must be exactly header + payload
    data = Path(path).read_bytes()
    arr = read_matrix(path)
    if len(data) != _HEADER.size + 4 * arr.size:
        raise CorruptHeader(f"{path}: trailing bytes after payload")
    return arr


# ---------------------------------------------------------------- manifests

@dataclass(frozen=True)
class ManifestEntry:
    media_id: str
    subject_id: str
    template_id: str
    kind: str
    row_start: int
    row_count: int

    def __post_init__(self):
        if not (self.media_id and self.subject_id and self.template_id):
            raise InvalidArgument("manifest ids must be non-empty")
        if self.kind not in (IMAGE, VIDEO):
            raise InvalidArgument(f"unknown media kind {self.kind!r}")
        if self.row_start < 0 or self.row_count < 1:
            raise InvalidArgument("invalid row range")
        if self.kind == IMAGE and self.row_count != 1:
            raise InvalidArgument("an image spans exactly one row")


def write_manifest(path, entries: Iterable[ManifestEntry]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in entries:
            fh.write(json.dumps(asdict(e), sort_keys=True) + "\n")


def read_manifest(path) -> list[ManifestEntry]:
    entries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                entries.append(ManifestEntry(**obj))
            except (json.JSONDecodeError, TypeError) as exc:
                raise CorruptHeader(f"{path}:{lineno}: bad manifest line: {exc}")
    return entries


@dataclass(frozen=True)
class LoadedDataset:
    templates: tuple[Template, ...]
    records: tuple[tuple[str, MediaRecord], ...]


def load_dataset(manifest_path, matrix_path) -> LoadedDataset:
    """Read a manifest + matrix pair into templates (float64 after load)."""
    entries = read_manifest(manifest_path)
    matrix = _read_matrix_strict(matrix_path).astype(np.float64)
    rows = matrix.shape[0]
    spans = sorted((e.row_start, e.row_start + e.row_count, e.media_id) for e in entries)
    prev_end = 0
    for start, end, media_id in spans:
        if end > rows:
            raise RangeOverlap(f"media {media_id!r} rows [{start},{end}) beyond {rows}")
        if start < prev_end:
            raise RangeOverlap(f"media {media_id!r} overlaps a previous row range")
        prev_end = end

    by_template: dict[str, list[MediaRecord]] = {}
    order: list[str] = []
    for e in entries:
        frames = matrix[e.row_start:e.row_start + e.row_count]
        rec = MediaRecord(e.media_id, e.subject_id, e.kind, frames)
        if e.template_id not in by_template:
            by_template[e.template_id] = []
            order.append(e.template_id)
        by_template[e.template_id].append(rec)
    templates = tuple(build_template(tid, by_template[tid]) for tid in order)
    records = tuple((e.template_id,
                     MediaRecord(e.media_id, e.subject_id, e.kind,
                                 matrix[e.row_start:e.row_start + e.row_count]))
                    for e in entries)
    return LoadedDataset(templates, records)


def save_dataset(records: Sequence[tuple[str, MediaRecord]],
                 manifest_path, matrix_path) -> None:
    """Write (template_id, record) pairs as a manifest + float32 matrix."""
    if not records:
        raise InvalidArgument("nothing to save")
    entries = []
    blocks = []
    row = 0
    for template_id, rec in records:
        entries.append(ManifestEntry(rec.media_id, rec.subject_id, template_id,
                                     rec.kind, row, rec.frames.shape[0]))
        blocks.append(rec.frames)
        row += rec.frames.shape[0]
    write_manifest(manifest_path, entries)
    write_matrix(matrix_path, np.vstack(blocks))


# ---------------------------------------------------------------- classifiers

def save_classifier(c: AdaptedClassifier, path) -> None:
    """Binary weights (float64, bit-exact) plus one JSON metadata line."""
    w = c.classifier.weights[None, :]
    meta = {
        "dtype": "<f8",
        "template_id": c.template_id,
        "template_size": c.template_size,
        "negative_source": c.negative_source.value,
        "objective_value": c.classifier.objective_value,
        "solver_iterations": c.classifier.solver_iterations,
        "gradient_norm": c.classifier.gradient_norm,
    }
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, 1, w.shape[1]))
        fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
        fh.write(json.dumps(meta, sort_keys=True).encode("utf-8") + b"\n")


def load_classifier(path) -> AdaptedClassifier:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise CorruptHeader(f"{path}: file shorter than header")
    magic, version, rows, dim = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise CorruptHeader(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise VersionMismatch(f"{path}: unsupported version {version}")
    payload_end = _HEADER.size + 8 * rows * dim
    if rows != 1 or len(data) <= payload_end:
        raise CorruptHeader(f"{path}: truncated classifier file")
    weights = np.frombuffer(data, dtype="<f8", count=dim, offset=_HEADER.size).copy()
    try:
        meta = json.loads(data[payload_end:].decode("utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptHeader(f"{path}: bad metadata sidecar: {exc}")
    clf = svm.LinearClassifier(weights, meta["objective_value"],
                               meta["solver_iterations"], meta["gradient_norm"])
    return AdaptedClassifier(meta["template_id"], clf, meta["template_size"],
                             NegativeSource(meta["negative_source"]))


# ---------------------------------------------------------------- protocols

def write_verification_pairs(path, pairs: Iterable[tuple[str, str, bool]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["probe_template_id", "reference_template_id", "mated"])
        for p, r, m in pairs:
            w.writerow([p, r, int(m)])


def read_verification_pairs(path) -> list[tuple[str, str, bool]]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            out.append((row["probe_template_id"], row["reference_template_id"],
                        bool(int(row["mated"]))))
    return out


def write_search_split(path, roles: Mapping[str, str]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["template_id", "role"])
        for tid in sorted(roles):
            w.writerow([tid, roles[tid]])


def read_search_split(path) -> dict[str, str]:
    roles = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            if row["role"] not in ROLES:
                raise InvalidArgument(f"unknown split role {row['role']!r}")
            roles[row["template_id"]] = row["role"]
    return roles


def check_protocol(templates: Sequence[Template],
                   pair_refs: Iterable[str] = (),
                   roles: Mapping[str, str] | None = None) -> None:
    """Validate that referenced template ids exist and that the train
    split is subject-disjoint from gallery/probe subjects."""
    by_id = {t.template_id: t for t in templates}
    for tid in pair_refs:
        if tid not in by_id:
            raise DanglingTemplateRef(f"unknown template id {tid!r}")
    if roles:
        for tid in roles:
            if tid not in by_id:
                raise DanglingTemplateRef(f"unknown template id {tid!r}")
        train_subjects = {by_id[t].subject_id for t, r in roles.items() if r == ROLE_TRAIN}
        eval_subjects = {by_id[t].subject_id for t, r in roles.items() if r != ROLE_TRAIN}
        overlap = train_subjects & eval_subjects
        if overlap:
            raise SubjectOverlapError(
                f"train subjects overlap evaluation subjects: {sorted(overlap)[:5]}")


# ---------------------------------------------------------------- exports

def export_scores(scores: PairScores | ScoreMatrix, path) -> None:
    """Deterministic CSV: probe_id, reference_id, score (17 sig digits), mated."""
    rows = []
    if isinstance(scores, PairScores):
        for p, r, s, m in zip(scores.probe_ids, scores.reference_ids,
                              scores.scores, scores.mated):
            rows.append((p, r, float(s), bool(m)))
    else:
        for i, p in enumerate(scores.probe_ids):
            for j, g in enumerate(scores.gallery_ids):
                rows.append((p, g, float(scores.scores[i, j]), bool(scores.mated[i, j])))
    rows.sort(key=lambda r: (r[0], r[1]))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["probe_id", "reference_id", "score", "mated"])
        for p, r, s, m in rows:
            w.writerow([p, r, _fmt(s), int(m)])


def read_scores(path) -> PairScores:
    probe_ids, ref_ids, scores, mated = [], [], [], []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            probe_ids.append(row["probe_id"])
            ref_ids.append(row["reference_id"])
            scores.append(float(row["score"]))
            mated.append(bool(int(row["mated"])))
    return PairScores(tuple(probe_ids), tuple(ref_ids),
                      np.asarray(scores), np.asarray(mated, dtype=bool))


def export_curve(points: Sequence[CurvePoint], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["threshold", "x", "y"])
        for p in points:
            w.writerow([_fmt(p.threshold), _fmt(p.x), _fmt(p.y)])


def export_cmc(points: Sequence[tuple[int, float]], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["rank", "recall"])
        for k, recall in points:
            w.writerow([k, _fmt(recall)])
