"""Command-line driver: synth / verify / identify / study.

Every run echoes its fully resolved configuration to the output
directory so a rerun from the echo reproduces the outputs byte for
byte. Errors are emitted as one JSON object on stderr (scriptable).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, asdict, replace
from pathlib import Path

import numpy as np

from . import adapt, metrics, negsets, storage, synth
from .adapt import FusionStrategy, FusionVariant
from .core import Gallery, baseline_similarity, encode_template
from .errors import InvalidConfig, TemplAdaptError
from .metrics import PairScores


@dataclass(frozen=True)
class RunConfig:
    c_param: float = 10.0
    tol: float = 1e-8
    max_iter: int = 1000
    fusion: str = "average"
    wta_smaller_wins: bool = False
    negatives: str = "trn"  # trn | external | union
    buckets: tuple[int, ...] = (1, 2, 4, 8, 16, 32)
    rank_list_size: int = 20
    fmr_targets: tuple[float, ...] = (1e-2, 1e-3)
    seed: int = 0
    per_media_margins: bool = False
    method: str = "adapted"  # adapted | baseline
    external_size: int = 70000
    external_per_class_cap: int = 1000

    def __post_init__(self):
        if self.fusion not in [v.value for v in FusionVariant]:
            raise InvalidConfig(f"unknown fusion strategy {self.fusion!r}")
        if self.negatives not in ("trn", "external", "union"):
            raise InvalidConfig(f"unknown negative source {self.negatives!r}")
        if self.method not in ("adapted", "baseline"):
            raise InvalidConfig(f"unknown method {self.method!r}")
        if self.rank_list_size < 1 or self.max_iter < 1:
            raise InvalidConfig("rank_list_size and max_iter must be >= 1")
        if not (self.c_param > 0 and self.tol > 0):
            raise InvalidConfig("c_param and tol must be positive")

    def fusion_strategy(self) -> FusionStrategy:
        return FusionStrategy(FusionVariant(self.fusion),
                              larger_template_wins=not self.wta_smaller_wins)


def _resolve_config(args) -> RunConfig:
    base = {}
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            base = json.load(fh)
        base = {k: v for k, v in base.items() if k in RunConfig.__dataclass_fields__}
    cfg = RunConfig(**base)
    overrides = {}
    for flag, field in [("c_param", "c_param"), ("tol", "tol"),
                        ("max_iter", "max_iter"), ("fusion", "fusion"),
                        ("negatives", "negatives"), ("seed", "seed"),
                        ("rank_list_size", "rank_list_size"),
                        ("method", "method")]:
        v = getattr(args, flag, None)
        if v is not None:
            overrides[field] = v
    if getattr(args, "buckets", None):
        overrides["buckets"] = tuple(int(b) for b in args.buckets.split(","))
    if getattr(args, "wta_smaller_wins", False):
        overrides["wta_smaller_wins"] = True
    if getattr(args, "per_media_margins", False):
        overrides["per_media_margins"] = True
    return replace(cfg, **overrides)


def _echo_config(cfg: RunConfig, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "run_config.json", "w", encoding="utf-8") as fh:
        json.dump(asdict(cfg), fh, sort_keys=True, indent=2)
        fh.write("\n")


def _load_inputs(args):
    ds = storage.load_dataset(args.manifest, args.matrix)
    return ds.templates


def _split_groups(templates, roles):
    storage.check_protocol(templates, roles=roles)
    by_id = {t.template_id: t for t in templates}
    groups = {role: [] for role in storage.ROLES}
    for tid in sorted(roles):
        groups[roles[tid]].append(by_id[tid])
    return groups


def _negative_pool(cfg: RunConfig, templates, roles, eval_subjects, args):
    pools = []
    if cfg.negatives in ("trn", "union"):
        train = [t for t in templates
                 if roles.get(t.template_id) == storage.ROLE_TRAIN]
        pools.append(negsets.build_training_pool(train, eval_subjects))
    if cfg.negatives in ("external", "union"):
        ext = storage.load_dataset(args.external_manifest, args.external_matrix)
        encodings, subjects = [], []
        for t in ext.templates:
            for m in t.media:
                encodings.append(m)
                subjects.append(t.subject_id)
        target = min(cfg.external_size, len(encodings))
        pools.append(negsets.build_external_pool(
            encodings, subjects, cfg.external_per_class_cap, target, cfg.seed))
    pool = pools[0]
    if len(pools) == 2:
        pool = negsets.union_pool(pools[0], pools[1])
    return pool


def _baseline_scores(pairs) -> PairScores:
    enc = {}
    probe_ids, ref_ids, scores, mated = [], [], [], []
    for tp, tq in pairs:
        for t in (tp, tq):
            if t.template_id not in enc:
                enc[t.template_id] = encode_template(t)
        probe_ids.append(tp.template_id)
        ref_ids.append(tq.template_id)
        scores.append(baseline_similarity(enc[tp.template_id], enc[tq.template_id]))
        mated.append(tp.subject_id == tq.subject_id)
    return PairScores(tuple(probe_ids), tuple(ref_ids),
                      np.asarray(scores), np.asarray(mated, dtype=bool))


def _verify_metrics(scores: PairScores, cfg: RunConfig):
    curve = metrics.roc_11(scores)
    ops = {}
    for target in cfg.fmr_targets:
        try:
            op = metrics.operating_point(curve, target)
            ops[f"tar_at_fmr_{target:g}"] = {
                "value": op.y, "achieved_fmr": op.achieved_x,
                "threshold": op.threshold, "convention": op.convention}
        except metrics.Unachievable:
            ops[f"tar_at_fmr_{target:g}"] = None
    return curve, ops


def cmd_synth(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = synth.SynthConfig(
        d=args.d, num_subjects=args.subjects,
        templates_per_subject=args.templates_per_subject,
        media_per_template=(args.media_min, args.media_max),
        frames_per_video=args.frames, video_fraction=args.video_fraction,
        noise_sigma=args.sigma, nuisance_dim=args.nuisance_dim,
        nuisance_sigma=args.nuisance_sigma,
        train_fraction=args.train_fraction, seed=args.seed)
    ds = synth.generate(cfg)
    storage.save_dataset(ds.records, out / "dataset.manifest.jsonl", out / "dataset.tadp")

    eval_templates = ds.split_templates(synth.EVAL)
    mated = synth.mated_pairs(eval_templates)
    nonmated = synth.nonmated_pairs(eval_templates,
                                    args.nonmated_per_mated * len(mated), cfg.seed)
    pairs = ([(p.template_id, q.template_id, True) for p, q in mated]
             + [(p.template_id, q.template_id, False) for p, q in nonmated])
    storage.write_verification_pairs(out / "pairs.csv", pairs)

    # search split: most eval subjects enroll their first template in the
    # gallery and probe with the rest; a seeded tail stays out of the
    # gallery to provide non-mated searches
    rng = np.random.default_rng(cfg.seed)
    eval_subjects = sorted({t.subject_id for t in eval_templates})
    n_out = max(1, int(round(args.nonmated_subject_fraction * len(eval_subjects))))
    outside = set(s for s in rng.permutation(eval_subjects)[:n_out])
    roles = {}
    by_subject: dict[str, list] = {}
    for t in sorted(eval_templates, key=lambda t: t.template_id):
        by_subject.setdefault(t.subject_id, []).append(t)
    for subj, group in by_subject.items():
        if subj in outside:
            for t in group:
                roles[t.template_id] = storage.ROLE_PROBE_NONMATED
        else:
            roles[group[0].template_id] = storage.ROLE_GALLERY
            for t in group[1:]:
                roles[t.template_id] = storage.ROLE_PROBE_MATED
    for t in ds.split_templates(synth.TRAIN):
        roles[t.template_id] = storage.ROLE_TRAIN
    storage.write_search_split(out / "search.csv", roles)

    with open(out / "synth_config.json", "w", encoding="utf-8") as fh:
        json.dump(asdict(cfg), fh, sort_keys=True, indent=2)
        fh.write("\n")
    return 0


def _score_pairs_for(cfg: RunConfig, templates, pair_defs, pool):
    by_id = {t.template_id: t for t in templates}
    storage.check_protocol(templates,
                           pair_refs=[tid for p in pair_defs for tid in p[:2]])
    pairs = [(by_id[p], by_id[r]) for p, r, _ in pair_defs]
    if cfg.method == "baseline":
        return _baseline_scores(pairs)
    return adapt.score_verification_pairs(
        pairs, pool, c=cfg.c_param, f=cfg.fusion_strategy(),
        tol=cfg.tol, max_iter=cfg.max_iter,
        per_media_margins=cfg.per_media_margins)


def cmd_verify(args) -> int:
    cfg = _resolve_config(args)
    out = Path(args.out)
    _echo_config(cfg, out)
    templates = _load_inputs(args)
    pair_defs = storage.read_verification_pairs(args.pairs)
    pool = None
    if cfg.method == "adapted":
        roles = storage.read_search_split(args.split)
        eval_subjects = {t.subject_id for t in templates
                         if roles.get(t.template_id) not in (storage.ROLE_TRAIN, None)}
        pool = _negative_pool(cfg, templates, roles, eval_subjects, args)
    scores = _score_pairs_for(cfg, templates, pair_defs, pool)
    storage.export_scores(scores, out / "scores.csv")
    curve, ops = _verify_metrics(scores, cfg)
    storage.export_curve(curve, out / "roc.csv")
    with open(out / "operating_points.json", "w", encoding="utf-8") as fh:
        json.dump(ops, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return 0


def cmd_identify(args) -> int:
    cfg = _resolve_config(args)
    out = Path(args.out)
    _echo_config(cfg, out)
    templates = _load_inputs(args)
    roles = storage.read_search_split(args.split)
    groups = _split_groups(templates, roles)
    gallery = Gallery(tuple(groups[storage.ROLE_GALLERY]))
    probes = groups[storage.ROLE_PROBE_MATED] + groups[storage.ROLE_PROBE_NONMATED]
    eval_subjects = gallery.subjects | {t.subject_id for t in probes}
    pool = _negative_pool(cfg, templates, roles, eval_subjects, args)
    matrix = adapt.score_search(probes, gallery, pool, c=cfg.c_param,
                                f=cfg.fusion_strategy(), tol=cfg.tol,
                                max_iter=cfg.max_iter)
    storage.export_scores(matrix, out / "search_scores.csv")

    closed_rows = [i for i, t in enumerate(probes)
                   if roles[t.template_id] == storage.ROLE_PROBE_MATED]
    closed = metrics.ScoreMatrix(
        tuple(matrix.probe_ids[i] for i in closed_rows), matrix.gallery_ids,
        matrix.scores[closed_rows], matrix.mated[closed_rows])
    cmc_points = metrics.cmc(closed)
    storage.export_cmc(cmc_points, out / "cmc.csv")
    det = metrics.det_1n(matrix, top_l=cfg.rank_list_size)
    storage.export_curve(det, out / "det_1n.csv")

    ops = {"cmc_rank_1": cmc_points[0][1],
           "cmc_rank_10": cmc_points[min(9, len(cmc_points) - 1)][1]}
    for target in cfg.fmr_targets:
        try:
            op = metrics.operating_point(det, target)
            ops[f"tpir_at_fpir_{target:g}"] = {
                "value": 1.0 - op.y, "achieved_fpir": op.achieved_x,
                "threshold": op.threshold, "convention": op.convention}
        except metrics.Unachievable:
            ops[f"tpir_at_fpir_{target:g}"] = None
    with open(out / "operating_points.json", "w", encoding="utf-8") as fh:
        json.dump(ops, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return 0


def _study_rows_to_csv(path, header, rows):
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow(row)


def cmd_study(args) -> int:
    cfg = _resolve_config(args)
    out = Path(args.out)
    _echo_config(cfg, out)
    templates = _load_inputs(args)
    pair_defs = storage.read_verification_pairs(args.pairs)
    roles = storage.read_search_split(args.split)
    eval_subjects = {t.subject_id for t in templates
                     if roles.get(t.template_id) not in (storage.ROLE_TRAIN, None)}
    fmt = storage._fmt

    if args.study == "negset":
        variants = {"trn": replace(cfg, negatives="trn")}
        gallery_templates = [t for t in templates
                             if roles.get(t.template_id) == storage.ROLE_GALLERY]
        if gallery_templates:
            variants["neg"] = None  # handled below with a gallery pool
        if args.external_manifest:
            variants["external"] = replace(cfg, negatives="external")
            variants["union"] = replace(cfg, negatives="union")
        rows = []
        for name in sorted(variants):
            if name == "neg":
                pool = negsets.gallery_pool(gallery_templates)
                scores = _score_pairs_for(cfg, templates, pair_defs, pool)
            else:
                vcfg = variants[name]
                pool = _negative_pool(vcfg, templates, roles, eval_subjects, args)
                scores = _score_pairs_for(vcfg, templates, pair_defs, pool)
            _, ops = _verify_metrics(scores, cfg)
            rows.append([name] + [fmt(ops[k]["value"]) if ops[k] else ""
                                  for k in sorted(ops)])
        _study_rows_to_csv(out / "study_negset.csv",
                           ["negative_source"] + sorted(
                               f"tar_at_fmr_{t:g}" for t in cfg.fmr_targets), rows)

    elif args.study == "fusion":
        pool = _negative_pool(cfg, templates, roles, eval_subjects, args)
        rows = []
        variants = [(v.value, replace(cfg, fusion=v.value)) for v in FusionVariant]
        variants.append(("average-per-media",
                         replace(cfg, fusion="average", per_media_margins=True)))
        for name, vcfg in variants:
            scores = _score_pairs_for(vcfg, templates, pair_defs, pool)
            _, ops = _verify_metrics(scores, cfg)
            rows.append([name] + [fmt(ops[k]["value"]) if ops[k] else ""
                                  for k in sorted(ops)])
        _study_rows_to_csv(out / "study_fusion.csv",
                           ["fusion"] + sorted(
                               f"tar_at_fmr_{t:g}" for t in cfg.fmr_targets), rows)

    elif args.study == "template-size":
        pool = _negative_pool(cfg, templates, roles, eval_subjects, args)
        scores = _score_pairs_for(cfg, templates, pair_defs, pool)
        sizes = {t.template_id: t.size for t in templates}
        buckets = metrics.bucket_by_template_size(
            scores, sizes, edges=cfg.buckets, fmr_targets=cfg.fmr_targets)
        rows = []
        for b in buckets:
            rows.append([b.lo, b.hi, b.num_pairs, b.num_mated,
                         fmt(b.mated_mean) if b.mated_mean is not None else "",
                         fmt(b.mated_std) if b.mated_std is not None else ""]
                        + [fmt(b.tar[t]) if b.tar[t] is not None else ""
                           for t in cfg.fmr_targets])
        _study_rows_to_csv(out / "study_template_size.csv",
                           ["lo", "hi", "num_pairs", "num_mated",
                            "mated_mean", "mated_std"]
                           + [f"tar_at_fmr_{t:g}" for t in cfg.fmr_targets], rows)
    else:
        raise InvalidConfig(f"unknown study {args.study!r}")
    return 0


def _add_run_flags(p):
    p.add_argument("--config", help="JSON config file; flags override it")
    p.add_argument("--c-param", dest="c_param", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--fusion", choices=[v.value for v in FusionVariant])
    p.add_argument("--negatives", choices=["trn", "external", "union"])
    p.add_argument("--buckets", help="comma-separated bucket edges")
    p.add_argument("--rank-list-size", dest="rank_list_size", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--wta-smaller-wins", action="store_true")
    p.add_argument("--per-media-margins", action="store_true")
    p.add_argument("--method", choices=["adapted", "baseline"])
    p.add_argument("--external-manifest")
    p.add_argument("--external-matrix")
    p.add_argument("--out", required=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="templadapt")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset + protocol")
    p.add_argument("--d", type=int, default=64)
    p.add_argument("--subjects", type=int, default=50)
    p.add_argument("--templates-per-subject", dest="templates_per_subject",
                   type=int, default=2)
    p.add_argument("--media-min", dest="media_min", type=int, default=1)
    p.add_argument("--media-max", dest="media_max", type=int, default=4)
    p.add_argument("--frames", type=int, default=5)
    p.add_argument("--video-fraction", dest="video_fraction", type=float, default=0.0)
    p.add_argument("--sigma", type=float, default=0.3)
    p.add_argument("--nuisance-dim", dest="nuisance_dim", type=int, default=0)
    p.add_argument("--nuisance-sigma", dest="nuisance_sigma", type=float, default=1.0)
    p.add_argument("--train-fraction", dest="train_fraction", type=float, default=0.3)
    p.add_argument("--nonmated-per-mated", dest="nonmated_per_mated",
                   type=int, default=10)
    p.add_argument("--nonmated-subject-fraction", dest="nonmated_subject_fraction",
                   type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("verify", help="1:1 verification run")
    p.add_argument("--manifest", required=True)
    p.add_argument("--matrix", required=True)
    p.add_argument("--pairs", required=True)
    p.add_argument("--split", help="search split CSV (for trn negatives)")
    _add_run_flags(p)
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("identify", help="1:N open-set identification run")
    p.add_argument("--manifest", required=True)
    p.add_argument("--matrix", required=True)
    p.add_argument("--split", required=True)
    _add_run_flags(p)
    p.set_defaults(fn=cmd_identify)

    p = sub.add_parser("study", help="ablation studies")
    p.add_argument("--study", required=True,
                   choices=["negset", "fusion", "template-size"])
    p.add_argument("--manifest", required=True)
    p.add_argument("--matrix", required=True)
    p.add_argument("--pairs", required=True)
    p.add_argument("--split", required=True)
    _add_run_flags(p)
    p.set_defaults(fn=cmd_study)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except TemplAdaptError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 2
    except OSError as exc:
        print(json.dumps({"error": "IoError", "message": str(exc)}),
              file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
