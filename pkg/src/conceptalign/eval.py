"""Geometric regularities of a common space and the isosceles ranking metric.

For a law ``tau = a s b`` with state vectors ``sigma_a``, ``sigma_b`` the
isosceles score of a candidate law vector ``u`` is
``| |u - sigma_b| - |tau - sigma_a| |``; the true law should rank near the top.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from ._utils import make_rng
from .align import CommonSpace
from .embed import EmbeddingSpace
from .graphsys import LawToken

__all__ = [
    "LawRank",
    "EvalReport",
    "AggregateReport",
    "MidpointStats",
    "isosceles_rank",
    "evaluate",
    "summarize_ranks",
    "midpoint_hit_rate",
    "cosine_midpoint_score",
    "analogy_check",
    "remove_outliers",
    "shuffle_baseline",
    "aggregate",
    "EPS_TRI",
    "METRICS",
]

METRICS = ("l2", "l1")
EPS_TRI = 0.35
TOP_LEVELS = (10, 30, 50)


def _norm(v: np.ndarray, metric: str, axis=0):
    if metric == "l2":
        return np.sqrt(np.sum(v * v, axis=axis))
    if metric == "l1":
        return np.sum(np.abs(v), axis=axis)
    raise ValueError(f"metric must be one of {METRICS}, got {metric!r}")


@dataclass(frozen=True)
class LawRank:
    law: str
    rank: int
    m: int

    def __post_init__(self):
        if not 1 <= self.rank <= self.m:
            raise ValueError(f"rank {self.rank} outside [1, {self.m}]")

    @property
    def percentile(self) -> float:
        return 100.0 * self.rank / self.m


@dataclass(frozen=True)
class MidpointStats:
    midpoint_rate: float
    triangle_rate: float
    combined_rate: float
    eps_tri: float = EPS_TRI


@dataclass(frozen=True)
class EvalReport:
    top10: float
    top30: float
    top50: float
    avg: float
    per_law: tuple[LawRank, ...]
    m: int
    n: int
    metric: str = "l2"
    midpoint: MidpointStats | None = None

    @property
    def headline(self) -> tuple[float, float, float, float]:
        return (self.top10, self.top30, self.top50, self.avg)

    def to_dict(self) -> dict:
        d = {
            "top10": self.top10, "top30": self.top30, "top50": self.top50, "avg": self.avg,
            "m": self.m, "n": self.n, "metric": self.metric,
            "per_law": [{"law": r.law, "rank": r.rank} for r in self.per_law],
        }
        if self.midpoint is not None:
            d["midpoint"] = asdict(self.midpoint)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        mp = d.get("midpoint")
        return cls(d["top10"], d["top30"], d["top50"], d["avg"],
                   tuple(LawRank(r["law"], r["rank"], d["m"]) for r in d["per_law"]),
                   d["m"], d["n"], d.get("metric", "l2"),
                   MidpointStats(**mp) if mp else None)


@dataclass(frozen=True)
class AggregateReport:
    trials: int
    mean: dict
    std: dict
    regenerated: int = 0
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"trials": self.trials, "mean": self.mean, "std": self.std,
                "regenerated": self.regenerated, **self.extra}


def _as_law(law) -> LawToken:
    return law if isinstance(law, LawToken) else LawToken.parse(str(law))


def _pessimistic_rank(scores: np.ndarray, true_idx: int) -> int:
    s = scores[true_idx]
    return int(np.sum(scores < s) + np.sum(scores == s))


def isosceles_rank(common: CommonSpace, law, metric: str = "l2") -> LawRank:
    """Rank of the true law among all law vectors by isosceles mismatch.

    Ties are resolved against the true law (it is placed after every candidate
    with an equal score).
    """
    law = _as_law(law)
    tau = common.law(law)
    s1, s2 = common.state(law.source), common.state(law.target)
    r = _norm(tau - s1, metric)
    scores = np.abs(_norm(common.law_vectors - s2[:, None], metric) - r)
    i = common._law_idx[law.text]
    return LawRank(law.text, _pessimistic_rank(scores, i), common.m)


def summarize_ranks(ranks: Sequence[LawRank], m: int) -> tuple[float, float, float, float]:
    """``(top10, top30, top50, avg)`` in percent; ``topK`` counts ranks within
    ``ceil(K/100 * m)``."""
    r = np.array([x.rank for x in ranks])
    tops = [100.0 * float(np.sum(r <= math.ceil(k * m / 100))) / len(r) for k in TOP_LEVELS]
    avg = float(np.mean(100.0 * r / m))
    return tops[0], tops[1], tops[2], avg


def evaluate(common: CommonSpace, metric: str = "l2", eps_tri: float = EPS_TRI) -> EvalReport:
    per_law = tuple(isosceles_rank(common, t, metric) for t in common.law_tokens)
    top10, top30, top50, avg = summarize_ranks(per_law, common.m)
    return EvalReport(top10, top30, top50, avg, per_law, common.m, common.n, metric,
                      midpoint_hit_rate(common, eps_tri, metric))


def cosine_midpoint_score(common: CommonSpace, law) -> float:
    law = _as_law(law)
    tau = common.law(law)
    mid = common.state(law.source) + common.state(law.target)
    denom = np.linalg.norm(tau) * np.linalg.norm(mid)
    if denom == 0:
        raise ValueError(f"degenerate cosine for {law.text}: zero-norm vector")
    return float(np.dot(tau, mid) / denom)


def analogy_check(common: CommonSpace, t1, t2, metric: str = "l2") -> float:
    """Deviation ``|(tau1 - (s + s1)/2) - (tau2 - (s + s2)/2)|`` for two laws
    sharing the state ``s``.

    The shared state may be the common source (``s s s1``, ``s s s2``) or the
    common target (``s1 s s``, ``s2 s s``); either way it cancels.
    """
    t1, t2 = _as_law(t1), _as_law(t2)
    if t1.source == t2.source:
        a, b = t1.target, t2.target
    elif t1.target == t2.target:
        a, b = t1.source, t2.source
    else:
        raise ValueError(f"{t1.text} and {t2.text} share neither source nor target")
    dev = (common.law(t1) - 0.5 * common.state(a)) - (common.law(t2) - 0.5 * common.state(b))
    return float(_norm(dev, metric))


def midpoint_hit_rate(common: CommonSpace, eps_tri: float = EPS_TRI,
                      metric: str = "l2") -> MidpointStats:
    """Fraction of laws that sit nearest to their states' midpoint, or that
    complete a similar triangle (deviation < ``eps_tri``) with some other law
    sharing an endpoint state; the two sub-rates are reported as well."""
    laws = [_as_law(t) for t in common.law_tokens]
    m = len(laws)
    Y = common.law_vectors
    mid_hits = np.zeros(m, dtype=bool)
    tri_hits = np.zeros(m, dtype=bool)
    by_source: dict[int, list[int]] = {}
    by_target: dict[int, list[int]] = {}
    for i, t in enumerate(laws):
        by_source.setdefault(t.source, []).append(i)
        by_target.setdefault(t.target, []).append(i)
    for i, t in enumerate(laws):
        mid = 0.5 * (common.state(t.source) + common.state(t.target))
        d = _norm(Y - mid[:, None], metric)
        mid_hits[i] = np.sum(d <= d[i]) == 1
        for j in by_source[t.source] + by_target[t.target]:
            if j != i and analogy_check(common, t, laws[j], metric) < eps_tri:
                tri_hits[i] = True
                break
    return MidpointStats(float(mid_hits.mean()), float(tri_hits.mean()),
                         float((mid_hits | tri_hits).mean()), eps_tri)


def remove_outliers(space: EmbeddingSpace, z: float = 2.0):
    """Drop tokens farther from the centroid than ``mean + z * std`` of all
    centroid distances, at most 20% of the vocabulary (the farthest first).

    Returns ``(reduced_space, removed_tokens)``.
    """
    if len(space) < 3:
        raise ValueError("outlier removal needs at least 3 vectors")
    V = space.vectors
    dist = np.linalg.norm(V - V.mean(axis=0), axis=1)
    threshold = dist.mean() + z * dist.std()
    cand = np.flatnonzero(dist > threshold)
    cap = int(0.2 * len(space))
    cand = cand[np.argsort(-dist[cand], kind="stable")][:cap]
    removed = tuple(space.vocab[i] for i in sorted(cand))
    keep = [t for t in space.vocab if t not in set(removed)]
    return space.subset(keep), removed


def shuffle_baseline(common: CommonSpace, seed: int) -> CommonSpace:
    """Permute law vectors among law tokens (never the identity when m >= 2)."""
    m = common.m
    if m < 2:
        raise ValueError("shuffling needs at least two laws")
    rng = make_rng(seed)
    perm = rng.permutation(m)
    while np.all(perm == np.arange(m)):
        perm = rng.permutation(m)
    return common.with_laws(common.law_vectors[:, perm])


def aggregate(reports: Sequence[EvalReport], regenerated: int = 0) -> AggregateReport:
    """Mean and population standard deviation of the headline statistics."""
    if not reports:
        raise ValueError("nothing to aggregate")
    keys = ("top10", "top30", "top50", "avg")
    table = np.array([r.headline for r in reports], dtype=np.float64)
    mean = {k: float(v) for k, v in zip(keys, table.mean(axis=0))}
    std = {k: float(v) for k, v in zip(keys, table.std(axis=0))}
    extra = {}
    mids = [r.midpoint for r in reports if r.midpoint is not None]
    if mids:
        extra["midpoint_mean"] = {
            "midpoint_rate": float(np.mean([x.midpoint_rate for x in mids])),
            "triangle_rate": float(np.mean([x.triangle_rate for x in mids])),
            "combined_rate": float(np.mean([x.combined_rate for x in mids])),
        }
    return AggregateReport(len(reports), mean, std, regenerated, extra)
