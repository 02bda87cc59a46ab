import numpy as np
import pytest

from templadapt import adapt, svm
from templadapt.adapt import (ClassifierCache, FusionStrategy, FusionVariant,
                              adapt_gallery, adapt_probe, score_search,
                              score_verification_pairs, similarity,
                              similarity_per_media)
from templadapt.core import (Gallery, MediaEncoding, Template,
                             TemplateEncoding, encode_template)
from templadapt.errors import (AllSameSubject, EmptyNegativeSet,
                               GalleryTooSmall, InvalidArgument)
from templadapt.negsets import build_training_pool
from templadapt.synth import SynthConfig, generate, mated_pairs, nonmated_pairs


def enc(media_id, vec):
    v = np.asarray(vec, dtype=float)
    return MediaEncoding(media_id, v / np.linalg.norm(v))


def random_template(tid, sid, n_media, d=8, seed=0):
    rng = np.random.default_rng(seed)
    c = rng.standard_normal(d)
    return Template(tid, sid, tuple(
        enc(f"{tid}_m{i}", c + 0.3 * rng.standard_normal(d)) for i in range(n_media)))


def test_adapt_probe_reduces_to_1d_closed_form():
    # 1 positive at (1,0), 1 negative at (-1,0): the solution lives on the
    # first axis with zero bias, so the margin at (1,0) is 4C/(1+4C)
    t = Template("p", "sA", (enc("m", [1.0, 0.0]),))
    negs = [enc("n", [-1.0, 0.0])]
    c = adapt_probe(t, negs, c=10.0)
    m = svm.functional_margin(c.classifier, np.array([1.0, 0.0]))
    assert m == pytest.approx(40 / 41, abs=1e-8)


def test_adapt_probe_permutation_invariant():
    t1 = random_template("t", "s", 4, seed=1)
    t2 = Template("t", "s", tuple(reversed(t1.media)))
    negs = [enc("n1", [1, -1, 0, 0, 1, 0, 0, 1]), enc("n2", [-1, 1, 1, 0, 0, 0, 1, 0])]
    w1 = adapt_probe(t1, negs).classifier.weights
    w2 = adapt_probe(t2, negs).classifier.weights
    assert np.array_equal(w1, w2)


def test_adapt_probe_empty_negatives():
    t = random_template("t", "s", 1)
    with pytest.raises(EmptyNegativeSet):
        adapt_probe(t, [])


def test_adapt_probe_pool_filters_same_subject():
    t = random_template("t", "sA", 2)
    pool = build_training_pool([random_template("x", "sA", 3, seed=2)])
    with pytest.raises(EmptyNegativeSet):
        adapt_probe(t, pool)


def test_adapt_gallery_two_subjects_and_leak_guard():
    a = random_template("tA", "sA", 2, seed=1)
    a2 = random_template("tA2", "sA", 2, seed=4)
    b = random_template("tB", "sB", 3, seed=2)
    g = Gallery((a, a2, b))
    classifiers = adapt_gallery(g)
    assert set(classifiers) == {"tA", "tA2", "tB"}
    # classifier for tA must be trained with only sB media as negatives;
    # retrain directly and compare
    pos = np.vstack([m.vector for m in a.media])
    neg = np.vstack([m.vector for m in b.media])
    direct = svm.train(svm.SvmProblem(pos, neg, 10.0))
    assert np.array_equal(classifiers["tA"].classifier.weights, direct.weights)


def test_adapt_gallery_too_small_and_all_same_subject():
    a = random_template("tA", "sA", 1)
    with pytest.raises(GalleryTooSmall):
        adapt_gallery(Gallery((a,)))
    a2 = random_template("tA2", "sA", 1, seed=3)
    with pytest.raises(AllSameSubject):
        adapt_gallery(Gallery((a, a2)))


def test_adding_subject_shifts_gallery_classifiers():
    a = random_template("tA", "sA", 2, seed=1)
    b = random_template("tB", "sB", 2, seed=2)
    c = random_template("tC", "sC", 2, seed=3)
    before = adapt_gallery(Gallery((a, b)))
    after = adapt_gallery(Gallery((a, b, c)))
    delta = np.linalg.norm(before["tA"].classifier.weights
                           - after["tA"].classifier.weights)
    assert delta > 1e-6


def _fixed_margin_classifier(tid, size, margin_weights):
    clf = svm.LinearClassifier(np.asarray(margin_weights, float), 0.0, 0, 0.0)
    return adapt.AdaptedClassifier(tid, clf, size,
                                   adapt.NegativeSource.DISJOINT_TRAINING_SET)


def test_similarity_average_arithmetic():
    # margins: P(q) = 0.4, Q(p) = -0.2
    p_enc = TemplateEncoding("P", np.array([1.0, 0.0]))
    q_enc = TemplateEncoding("Q", np.array([0.0, 1.0]))
    cp = _fixed_margin_classifier("P", 1, [0.0, 0.4, 0.0])
    cq = _fixed_margin_classifier("Q", 1, [-0.2, 0.0, 0.0])
    s = similarity(cp, p_enc, cq, q_enc)
    assert s == pytest.approx(0.1)


def test_similarity_template_weighted():
    p_enc = TemplateEncoding("P", np.array([1.0, 0.0]))
    q_enc = TemplateEncoding("Q", np.array([0.0, 1.0]))
    cp = _fixed_margin_classifier("P", 3, [0.0, 1.0, 0.0])   # P(q) = 1
    cq = _fixed_margin_classifier("Q", 1, [0.0, 0.0, 0.0])   # Q(p) = 0
    f = FusionStrategy(FusionVariant.TEMPLATE_WEIGHTED)
    assert similarity(cp, p_enc, cq, q_enc, f) == pytest.approx(0.75)


def test_similarity_wta_and_tie():
    p_enc = TemplateEncoding("P", np.array([1.0, 0.0]))
    q_enc = TemplateEncoding("Q", np.array([0.0, 1.0]))
    cp = _fixed_margin_classifier("P", 3, [0.0, 1.0, 0.0])
    cq = _fixed_margin_classifier("Q", 1, [0.0, 0.0, -1.0])
    f = FusionStrategy(FusionVariant.WINNER_TAKE_ALL)
    assert similarity(cp, p_enc, cq, q_enc, f) == pytest.approx(1.0)  # larger wins
    f2 = FusionStrategy(FusionVariant.WINNER_TAKE_ALL, larger_template_wins=False)
    assert similarity(cp, p_enc, cq, q_enc, f2) == pytest.approx(-1.0)
    cq_tie = _fixed_margin_classifier("Q", 3, [0.0, 0.0, -1.0])
    assert similarity(cp, p_enc, cq_tie, q_enc, f) == pytest.approx(0.0)  # mean on tie


def test_average_fusion_symmetric_on_random_instances():
    rng = np.random.default_rng(0)
    for i in range(10):
        tp = random_template(f"p{i}", "sA", 2, seed=i)
        tq = random_template(f"q{i}", "sB", 3, seed=100 + i)
        negs = [enc(f"n{j}", rng.standard_normal(8)) for j in range(5)]
        cp, cq = adapt_probe(tp, negs), adapt_probe(tq, negs)
        pe, qe = encode_template(tp), encode_template(tq)
        assert similarity(cp, pe, cq, qe) == pytest.approx(
            similarity(cq, qe, cp, pe), rel=1e-12)


def test_alpha_override_validation():
    with pytest.raises(InvalidArgument):
        FusionStrategy(FusionVariant.WINNER_TAKE_ALL, alpha=0.3)
    with pytest.raises(InvalidArgument):
        FusionStrategy(FusionVariant.AVERAGE, alpha=1.5)


def test_geometric_fusion_scale_invariant_to_weight_scaling():
    p_enc = TemplateEncoding("P", np.array([1.0, 0.0]))
    q_enc = TemplateEncoding("Q", np.array([0.0, 1.0]))
    w = np.array([0.5, 1.0, -0.2])
    f = FusionStrategy(FusionVariant.GEOMETRIC_AVERAGE)
    s1 = similarity(_fixed_margin_classifier("P", 1, w), p_enc,
                    _fixed_margin_classifier("Q", 1, w), q_enc, f)
    s2 = similarity(_fixed_margin_classifier("P", 1, 3 * w), p_enc,
                    _fixed_margin_classifier("Q", 1, 3 * w), q_enc, f)
    assert s1 == pytest.approx(s2)


def _small_benchmark(seed=0):
    cfg = SynthConfig(d=16, num_subjects=30, templates_per_subject=2,
                      media_per_template=(1, 3), noise_sigma=0.3,
                      train_fraction=0.3, seed=seed)
    ds = generate(cfg)
    train = ds.split_templates("train")
    ev = ds.split_templates("eval")
    pool = build_training_pool(train, eval_subjects={t.subject_id for t in ev})
    return ev, pool


def test_score_verification_pairs_identical_templates():
    ev, pool = _small_benchmark()
    t = ev[0]
    scores = score_verification_pairs([(t, t)], pool)
    cp = adapt_probe(t, pool)
    p = encode_template(t)
    assert scores.scores[0] == pytest.approx(
        svm.functional_margin(cp.classifier, p.vector))
    assert scores.mated[0]


def test_score_verification_pairs_caching():
    ev, pool = _small_benchmark()
    t0, t1, t2 = ev[:3]
    cache = ClassifierCache()
    score_verification_pairs([(t0, t1), (t0, t2), (t1, t2)], pool, cache=cache)
    assert cache.trainings == 3


def test_score_verification_mated_above_nonmated():
    cfg = SynthConfig(d=32, num_subjects=50, templates_per_subject=2,
                      media_per_template=(1, 3), noise_sigma=0.3,
                      train_fraction=0.2, seed=1)
    ds = generate(cfg)
    ev = ds.split_templates("eval")
    pool = build_training_pool(ds.split_templates("train"))
    pairs = mated_pairs(ev) + nonmated_pairs(ev, 100, seed=1)
    scores = score_verification_pairs(pairs, pool)
    assert scores.scores[scores.mated].mean() > scores.scores[~scores.mated].mean()


def test_per_media_scoring_differs_from_template_encoding():
    ev, pool = _small_benchmark()
    pairs = [(ev[0], ev[1])]
    a = score_verification_pairs(pairs, pool)
    b = score_verification_pairs(pairs, pool, per_media_margins=True)
    assert a.scores[0] != b.scores[0]


def test_scores_finite_for_all_fusions():
    ev, pool = _small_benchmark()
    pairs = [(ev[0], ev[1]), (ev[1], ev[2])]
    for variant in FusionVariant:
        s = score_verification_pairs(pairs, pool, f=FusionStrategy(variant))
        assert np.all(np.isfinite(s.scores))


def test_wta_returns_one_of_the_margins():
    ev, pool = _small_benchmark()
    tp, tq = ev[0], ev[1]
    cp, cq = adapt_probe(tp, pool), adapt_probe(tq, pool)
    pe, qe = encode_template(tp), encode_template(tq)
    m_p = svm.functional_margin(cp.classifier, qe.vector)
    m_q = svm.functional_margin(cq.classifier, pe.vector)
    s = similarity(cp, pe, cq, qe, FusionStrategy(FusionVariant.WINNER_TAKE_ALL))
    assert s in (pytest.approx(m_p), pytest.approx(m_q), pytest.approx((m_p + m_q) / 2))


def test_score_search_matrix():
    cfg = SynthConfig(d=16, num_subjects=10, templates_per_subject=2,
                      media_per_template=(1, 2), noise_sigma=0.2,
                      train_fraction=0.3, seed=2)
    ds = generate(cfg)
    ev = ds.split_templates("eval")
    pool = build_training_pool(ds.split_templates("train"))
    by_subject = {}
    for t in ev:
        by_subject.setdefault(t.subject_id, []).append(t)
    gallery = Gallery(tuple(g[0] for g in by_subject.values()))
    probes = [g[1] for g in by_subject.values() if len(g) > 1]
    m = score_search(probes, gallery, pool)
    assert m.scores.shape == (len(probes), len(gallery))
    # each probe's mate exists exactly once per row
    assert np.all(m.mated.sum(axis=1) == 1)


def test_score_search_identical_probe_attains_row_max():
    cfg = SynthConfig(d=16, num_subjects=8, templates_per_subject=1,
                      media_per_template=(2, 3), noise_sigma=0.2,
                      train_fraction=0.25, seed=3)
    ds = generate(cfg)
    ev = ds.split_templates("eval")
    pool = build_training_pool(ds.split_templates("train"))
    gallery = Gallery(tuple(ev))
    m = score_search([ev[0]], gallery, pool)
    assert int(np.argmax(m.scores[0])) == list(m.gallery_ids).index(ev[0].template_id)


def test_score_search_empty_probes():
    cfg = SynthConfig(d=8, num_subjects=4, templates_per_subject=1,
                      media_per_template=(1, 1), noise_sigma=0.2,
                      train_fraction=0.5, seed=4)
    ds = generate(cfg)
    ev = ds.split_templates("eval")
    pool = build_training_pool(ds.split_templates("train"))
    m = score_search([], Gallery(tuple(ev)), pool)
    assert m.scores.shape == (0, len(ev))
