import json
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conceptalign._utils import derive_seed
from conceptalign.align import CommonSpace, random_orthogonal
from conceptalign.embed import EmbeddingSpace
from conceptalign.eval import (
    EvalReport,
    LawRank,
    aggregate,
    analogy_check,
    cosine_midpoint_score,
    evaluate,
    isosceles_rank,
    midpoint_hit_rate,
    remove_outliers,
    shuffle_baseline,
    summarize_ranks,
)
from conceptalign.experiment import (
    ExperimentConfig,
    common_from_map,
    stage_align,
    stage_corpus,
    stage_graph,
    stage_train,
)
from conceptalign.graphsys import LawToken, generate_graph


def midpoint_fixture(seed=0, n=10, m=21, d=10):
    """Every law vector sits exactly at the midpoint of its two states.

    Graphs with a bidirectional pair are skipped: both directions share one
    midpoint, which would be a constructed tie.
    """
    g = generate_graph(n, m, seed)
    while any(g.has_edge(e.target, e.source) for e in g.edges):
        seed += 1000
        g = generate_graph(n, m, seed)
    X = np.random.default_rng(seed).normal(size=(d, n))
    laws = [e.text for e in g.edges]
    Y = np.column_stack([0.5 * (X[:, e.source - 1] + X[:, e.target - 1]) for e in g.edges])
    return CommonSpace(tuple(str(i) for i in range(1, n + 1)), X, tuple(laws), Y)


def random_space(seed, n=10, m=21, d=10):
    c = midpoint_fixture(seed, n, m, d)
    rng = np.random.default_rng(seed + 1)
    return c.with_laws(rng.normal(size=c.law_vectors.shape))


def test_midpoint_fixture_ranks_first():
    c = midpoint_fixture()
    for t in c.law_tokens:
        lr = isosceles_rank(c, t)
        assert lr.rank == 1
        # brute force: the true law is the unique zero-score candidate
        law = LawToken.parse(t)
        r = np.linalg.norm(c.law(t) - c.state(law.source))
        scores = [abs(np.linalg.norm(c.law(u) - c.state(law.target)) - r) for u in c.law_tokens]
        assert scores[c.law_tokens.index(t)] == pytest.approx(0.0, abs=1e-12)
        assert sorted(scores)[1] > 1e-6
    rep = evaluate(c)
    assert rep.top10 == 100.0 and rep.avg == pytest.approx(100 / 21)
    assert rep.midpoint.combined_rate == 1.0 and rep.midpoint.midpoint_rate == 1.0


def test_single_law():
    c = CommonSpace(("1", "2"), np.eye(2), ("1s2",), np.array([[0.3], [0.9]]))
    assert isosceles_rank(c, "1s2").rank == 1
    assert midpoint_hit_rate(c).combined_rate == 1.0


def test_pessimistic_ties():
    # two candidates at identical distance from the target state
    X = np.array([[0.0, 1.0], [0.0, 0.0]])
    Y = np.array([[0.5, 0.5], [0.0, 0.0]])
    c = CommonSpace(("1", "2"), X, ("1s2", "2s1"), Y)
    assert isosceles_rank(c, "1s2").rank == 2
    assert isosceles_rank(c, "2s1").rank == 2


def test_missing_tokens():
    c = midpoint_fixture()
    with pytest.raises(KeyError):
        isosceles_rank(c, "1s99")


def test_scrambled_spaces_are_at_chance():
    avgs = [evaluate(random_space(s)).avg for s in range(200)]
    assert 40 <= np.mean(avgs) <= 60


@given(seed=st.integers(0, 10**6), k=st.floats(0.01, 100))
@settings(max_examples=30, deadline=None)
def test_scale_invariance(seed, k):
    c = random_space(seed)
    base = [r.rank for r in evaluate(c).per_law]
    assert [r.rank for r in evaluate(c.scaled(k)).per_law] == base


@given(seed=st.integers(0, 10**6))
@settings(max_examples=30, deadline=None)
def test_rotation_invariance(seed):
    c = random_space(seed)
    q = random_orthogonal(10, seed)
    base = [r.rank for r in evaluate(c).per_law]
    assert [r.rank for r in evaluate(c.rotated(q)).per_law] == base


@given(seed=st.integers(0, 10**6), metric=st.sampled_from(["l2", "l1"]))
@settings(max_examples=30, deadline=None)
def test_report_self_consistent(seed, metric):
    rep = evaluate(random_space(seed), metric)
    assert all(1 <= r.rank <= rep.m for r in rep.per_law)
    assert rep.top10 <= rep.top30 <= rep.top50 <= 100
    assert 0 < rep.avg <= 100
    assert summarize_ranks(rep.per_law, rep.m) == rep.headline
    back = EvalReport.from_dict(json.loads(json.dumps(rep.to_dict())))
    assert back.headline == rep.headline and back.per_law == rep.per_law


def test_top_k_uses_ceiling():
    ranks = [LawRank("x", r, 21) for r in (1, 3, 4, 7, 11, 21)]
    # ceil(2.1)=3, ceil(6.3)=7, ceil(10.5)=11
    t10, t30, t50, avg = summarize_ranks(ranks, 21)
    assert (t10, t30, t50) == pytest.approx((200 / 6, 400 / 6, 500 / 6))
    assert avg == pytest.approx(np.mean([100 * r / 21 for r in (1, 3, 4, 7, 11, 21)]))


def test_cosine_midpoint():
    X = np.array([[1.0, 0.0], [0.0, 1.0]])
    c = CommonSpace(("1", "2"), X, ("1s2", "2s1"), np.array([[2.0, 1.0], [2.0, -1.0]]))
    assert cosine_midpoint_score(c, "1s2") == pytest.approx(1.0)
    assert cosine_midpoint_score(c, "2s1") == pytest.approx(0.0, abs=1e-15)
    z = CommonSpace(("1", "2"), np.array([[1.0, -1.0]]), ("1s2",), np.array([[1.0]]))
    with pytest.raises(ValueError, match="degenerate"):
        cosine_midpoint_score(z, "1s2")


def test_cosine_argmax_on_fixture():
    c = midpoint_fixture(3)
    for t in c.law_tokens:
        law = LawToken.parse(t)
        mid = c.state(law.source) + c.state(law.target)
        cos = [c.law(u) @ mid / (np.linalg.norm(c.law(u)) * np.linalg.norm(mid))
               for u in c.law_tokens]
        assert c.law_tokens[int(np.argmax(cos))] == t
        assert cosine_midpoint_score(c, t) == pytest.approx(1.0)


def test_analogy_exact_and_displaced():
    c = midpoint_fixture(4)
    laws = [LawToken.parse(t) for t in c.law_tokens]
    pairs = [(a, b) for a in laws for b in laws if a != b and a.source == b.source]
    assert pairs
    for a, b in pairs:
        assert analogy_check(c, a, b) == pytest.approx(0.0, abs=1e-12)
    a, b = pairs[0]
    v = np.random.default_rng(0).normal(size=10)
    Y = np.array(c.law_vectors)
    Y[:, c.law_tokens.index(b.text)] += v
    moved = c.with_laws(Y)
    assert analogy_check(moved, a, b) == pytest.approx(np.linalg.norm(v), abs=1e-10)
    with pytest.raises(ValueError):
        analogy_check(c, LawToken(1, 2), LawToken(3, 4))


def test_analogy_shared_target():
    c = CommonSpace(("5", "6", "7"), np.eye(3),
                    ("5s6", "7s6"), np.array([[0.5, 0.0], [0.5, 0.5], [0.0, 0.5]]))
    assert analogy_check(c, "5s6", "7s6") == pytest.approx(0.0, abs=1e-15)


@pytest.mark.slow
def test_same_source_pairs_beat_cross_pairs_in_aligned_spaces():
    cfg = ExperimentConfig(n_sequences=2000)
    same, cross = [], []
    rng = np.random.default_rng(0)
    for trial in range(100):
        gseed = derive_seed(99, trial)
        g = stage_graph(cfg, gseed)
        states, laws = stage_train(cfg, stage_corpus(cfg, g), gseed)
        if len(laws) < len(states):
            continue
        c = common_from_map(stage_align(cfg, states, laws, gseed), states, laws)
        toks = [LawToken.parse(t) for t in c.law_tokens]
        for a in toks:
            for b in toks:
                if a.source == b.source and a.target < b.target:
                    same.append(analogy_check(c, a, b))
        for _ in range(20):
            a, b = rng.choice(len(toks), 2, replace=False)
            a, b = toks[a], toks[b]
            if a.source != b.source and a.target != b.target:
                dev = (c.law(a) - 0.5 * (c.state(a.source) + c.state(a.target))) \
                    - (c.law(b) - 0.5 * (c.state(b.source) + c.state(b.target)))
                cross.append(float(np.linalg.norm(dev)))
    assert np.median(same) < np.median(cross)


def test_outliers_far_point():
    rng = np.random.default_rng(0)
    pts = np.vstack([rng.normal(scale=0.1, size=(20, 3)), [[10.0, 10.0, 10.0]]])
    toks = tuple(f"t{i}" for i in range(21))
    space = EmbeddingSpace(3, toks, pts, (1,) * 21)
    kept, removed = remove_outliers(space, 2.0)
    assert removed == ("t20",)
    assert len(kept) == 20


def test_outliers_equidistant_and_cap():
    square = EmbeddingSpace(2, ("a", "b", "c", "d"),
                            np.array([[1.0, 0], [-1, 0], [0, 1], [0, -1]]), (1,) * 4)
    assert remove_outliers(square)[1] == ()
    rng = np.random.default_rng(1)
    pts = rng.normal(size=(10, 2))
    pts[:4] *= 100
    space = EmbeddingSpace(2, tuple("abcdefghij"), pts, (1,) * 10)
    _, removed = remove_outliers(space, z=-10)
    assert len(removed) == 2
    dist = np.linalg.norm(pts - pts.mean(axis=0), axis=1)
    assert set(removed) == {"abcdefghij"[i] for i in np.argsort(-dist)[:2]}
    with pytest.raises(ValueError):
        remove_outliers(EmbeddingSpace(1, ("a", "b"), np.ones((2, 1)), (1, 1)))


@given(seed=st.integers(0, 2**32), m=st.integers(2, 30))
@settings(max_examples=40, deadline=None)
def test_shuffle_baseline(seed, m):
    c = random_space(0, m=m)
    s = shuffle_baseline(c, seed)
    assert s.law_tokens == c.law_tokens
    assert not np.array_equal(s.law_vectors, c.law_vectors)
    key = lambda M: sorted(map(tuple, M.T))  # noqa: E731
    assert key(s.law_vectors) == key(c.law_vectors)
    assert np.array_equal(shuffle_baseline(c, seed).law_vectors, s.law_vectors)


def test_shuffle_needs_two():
    c = CommonSpace(("1", "2"), np.eye(2), ("1s2",), np.ones((2, 1)))
    with pytest.raises(ValueError):
        shuffle_baseline(c, 0)


def test_shuffle_floor():
    avgs = [evaluate(shuffle_baseline(midpoint_fixture(s), s)).avg for s in range(50)]
    assert 40 <= np.mean(avgs) <= 60


def test_aggregate():
    rep = evaluate(midpoint_fixture())
    one = aggregate([rep])
    assert one.trials == 1 and all(v == 0 for v in one.std.values())
    reps = [evaluate(random_space(s)) for s in range(5)]
    agg = aggregate(reps, regenerated=2)
    table = np.array([r.headline for r in reps])
    # re-aggregation from persisted reports
    again = aggregate([EvalReport.from_dict(json.loads(json.dumps(r.to_dict()))) for r in reps])
    assert agg.mean == again.mean and agg.std == again.std
    assert agg.mean["avg"] == pytest.approx(table[:, 3].mean())
    assert agg.std["top10"] == pytest.approx(table[:, 0].std())
    assert agg.to_dict()["regenerated"] == 2
    with pytest.raises(ValueError):
        aggregate([])


def test_evaluation_uses_normalised_spaces():
    # raw vector scale must not matter end to end
    cfg = ExperimentConfig(n_sequences=500)
    g = stage_graph(cfg, 5)
    states, laws = stage_train(cfg, stage_corpus(cfg, g), 5)
    big = replace(laws, vectors=laws.vectors * 1000)
    a = common_from_map(stage_align(cfg, states, laws, 5), states, laws)
    b = common_from_map(stage_align(cfg, states, big, 5), states, big)
    assert [r.rank for r in evaluate(a).per_law] == [r.rank for r in evaluate(b).per_law]
