"""End-to-end trials: graph -> walks -> two skip-gram spaces -> alignment ->
evaluation, with every seed derived from the graph seed.

The CLI stages call the same ``stage_*`` functions, so running them one by one
reproduces a single trial exactly.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace

from ._utils import derive_seed
from .align import (
    AlignmentMap,
    CommonSpace,
    baseline_centroid_random,
    frequency_pairing,
    matrix_of,
    procrustes_fit,
    source_pairing,
    transport,
)
from .corpus import WalkCorpus, build_corpus
from .embed import EmbeddingSpace, TrainConfig, normalize, train_skipgram
from .eval import (
    METRICS,
    AggregateReport,
    EvalReport,
    aggregate,
    evaluate,
    remove_outliers,
    shuffle_baseline,
)
from .graphsys import GraphSystem, LawToken, scale_graph

__all__ = [
    "ExperimentConfig",
    "InsufficientLawsError",
    "VARIANTS",
    "stage_graph",
    "stage_corpus",
    "stage_train",
    "stage_align",
    "common_from_map",
    "stage_eval",
    "run_trial",
    "run_trials",
    "compare_variants",
    "report_document",
]

VARIANTS = ("procrustes", "shuffled", "centroid_random", "outlier_removed", "translated")
MAX_REGENERATIONS = 20

# sub-stream keys under the graph seed
_WALK, _TRAIN_STATES, _TRAIN_LAWS, _ALIGN, _SHUFFLE = 1, 2, 3, 4, 5


class InsufficientLawsError(RuntimeError):
    """The law vocabulary is smaller than the state vocabulary."""


@dataclass(frozen=True)
class ExperimentConfig:
    n: int = 10
    rho: float = 2.1
    d: int = 10
    window: int = 5
    n_sequences: int = 10000
    max_len: int = 20
    trials: int = 100
    seed: int = 0
    variant: str = "procrustes"
    metric: str = "l2"
    output_dir: str = "runs"
    pairing: str = "frequency"
    outlier_z: float = 2.0
    negatives: int = 5
    epochs: int = 5

    def problems(self) -> list[str]:
        """Every violated bound, empty when the config is valid."""
        out = []
        for name in ("n", "d", "window", "n_sequences", "trials", "epochs"):
            if getattr(self, name) < 1:
                out.append(f"{name} must be positive (got {getattr(self, name)})")
        if self.max_len < 2:
            out.append(f"max_len must be >= 2 (got {self.max_len})")
        if self.negatives < 0:
            out.append(f"negatives must be >= 0 (got {self.negatives})")
        if not self.rho > 0:
            out.append(f"rho must be positive (got {self.rho})")
        elif round(self.rho * self.n) > self.n * (self.n - 1):
            out.append(f"rho*n = {round(self.rho * self.n)} exceeds n(n-1) = {self.n * (self.n - 1)}")
        if self.seed < 0:
            out.append("seed must be nonnegative")
        if self.variant not in VARIANTS:
            out.append(f"variant must be one of {', '.join(VARIANTS)} (got {self.variant!r})")
        if self.metric not in METRICS:
            out.append(f"metric must be one of {', '.join(METRICS)} (got {self.metric!r})")
        if self.pairing not in ("frequency", "source"):
            out.append(f"pairing must be frequency or source (got {self.pairing!r})")
        return out

    def validate(self) -> "ExperimentConfig":
        bad = self.problems()
        if bad:
            raise ValueError("invalid config: " + "; ".join(bad))
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**d)

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(dim=self.d, window=self.window, negatives=self.negatives,
                           epochs=self.epochs, seed=seed)


def stage_graph(cfg: ExperimentConfig, graph_seed: int) -> GraphSystem:
    return scale_graph(cfg.n, cfg.rho, graph_seed)


def stage_corpus(cfg: ExperimentConfig, g: GraphSystem) -> WalkCorpus:
    return build_corpus(g, cfg.n_sequences, cfg.max_len, derive_seed(g.seed, _WALK))


def stage_train(cfg: ExperimentConfig, corpus: WalkCorpus, graph_seed: int):
    states = train_skipgram(corpus.state_tokens(),
                            cfg.train_config(derive_seed(graph_seed, _TRAIN_STATES)))
    laws = train_skipgram(corpus.law_tokens(),
                          cfg.train_config(derive_seed(graph_seed, _TRAIN_LAWS)))
    return states, laws


def _touches(law: str, states: set[str]) -> bool:
    t = LawToken.parse(law)
    return str(t.source) in states or str(t.target) in states


def stage_align(cfg: ExperimentConfig, state_space: EmbeddingSpace, law_space: EmbeddingSpace,
                graph_seed: int) -> AlignmentMap:
    """Fit the alignment for ``cfg.variant`` on the normalised spaces.

    ``shuffled`` fits like ``procrustes``; the shuffle happens at evaluation.
    """
    if len(law_space) < len(state_space):
        raise InsufficientLawsError(
            f"{len(law_space)} law tokens for {len(state_space)} states")
    X = normalize(state_space)
    Y = normalize(law_space)
    if cfg.variant == "centroid_random":
        return baseline_centroid_random(matrix_of(X, X.vocab), matrix_of(Y, Y.vocab),
                                        derive_seed(graph_seed, _ALIGN))
    excluded: tuple[str, ...] = ()
    if cfg.variant == "outlier_removed":
        X, out_states = remove_outliers(X, cfg.outlier_z)
        Y, out_laws = remove_outliers(Y, cfg.outlier_z)
        excluded = out_states + out_laws
    pair_fn = frequency_pairing if cfg.pairing == "frequency" else source_pairing
    pairs = pair_fn(X, Y, min(len(X), len(Y)))
    amap = procrustes_fit(matrix_of(X, [s for s, _ in pairs]),
                          matrix_of(Y, [t for _, t in pairs]), pairs)
    if cfg.variant == "translated":
        moved = transport(amap, matrix_of(Y, Y.vocab))
        offset = matrix_of(X, X.vocab).mean(axis=1) - moved.mean(axis=1)
        amap = AlignmentMap(amap.omega, amap.pairing, amap.residual, offset)
    return AlignmentMap(amap.omega, amap.pairing, amap.residual, amap.translation,
                        amap.scale, excluded)


def common_from_map(amap: AlignmentMap, state_space: EmbeddingSpace,
                    law_space: EmbeddingSpace) -> CommonSpace:
    """Common space from raw (unnormalised) spaces and a fitted map.

    Excluded states are dropped together with every law touching them.
    """
    excluded = set(amap.excluded)
    X = normalize(state_space)
    Y = normalize(law_space)
    states = [s for s in X.vocab if s not in excluded]
    dropped_states = {s for s in X.vocab if s in excluded}
    laws = [t for t in Y.vocab if t not in excluded and not _touches(t, dropped_states)]
    return CommonSpace(tuple(states), matrix_of(X, states), tuple(laws),
                       transport(amap, matrix_of(Y, laws)))


def stage_eval(cfg: ExperimentConfig, common: CommonSpace, graph_seed: int) -> EvalReport:
    if cfg.variant == "shuffled":
        common = shuffle_baseline(common, derive_seed(graph_seed, _SHUFFLE))
    return evaluate(common, cfg.metric)


def report_document(cfg: ExperimentConfig, graph_seed: int, report: EvalReport) -> dict:
    """JSON-ready per-trial report: parameters, seed and all statistics."""
    params = {k: v for k, v in cfg.to_dict().items() if k not in ("trials", "output_dir")}
    return {"params": params, "graph_seed": graph_seed, "report": report.to_dict()}


def dumps(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def trial_graph_seed(master: int, trial: int, attempt: int = 0) -> int:
    """Trial ``i`` uses ``master + i``; regenerations draw a derived seed."""
    if attempt == 0:
        return master + trial
    return derive_seed(master, trial, attempt)


def _run_one(cfg: ExperimentConfig, trial: int, variants: tuple[str, ...]):
    last_error = None
    for attempt in range(MAX_REGENERATIONS):
        gseed = trial_graph_seed(cfg.seed, trial, attempt)
        g = stage_graph(cfg, gseed)
        corpus = stage_corpus(cfg, g)
        states, laws = stage_train(cfg, corpus, gseed)
        try:
            out = {}
            for v in variants:
                vcfg = replace(cfg, variant=v)
                amap = stage_align(vcfg, states, laws, gseed)
                out[v] = stage_eval(vcfg, common_from_map(amap, states, laws), gseed)
            return gseed, attempt, out
        except InsufficientLawsError as exc:
            last_error = exc
    raise RuntimeError(f"trial {trial}: no usable graph after {MAX_REGENERATIONS} "
                       f"attempts ({last_error})")


def run_trial(cfg: ExperimentConfig, trial: int = 0):
    """``(graph_seed, regenerations, EvalReport)`` for one trial."""
    gseed, attempts, out = _run_one(cfg, trial, (cfg.variant,))
    return gseed, attempts, out[cfg.variant]


def _collect(cfg, variants, n_jobs):
    trials = range(cfg.trials)
    if n_jobs == 1:
        results = [_run_one(cfg, i, variants) for i in trials]
    else:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(_run_one, [cfg] * cfg.trials, trials,
                                    [variants] * cfg.trials))
    return results


def compare_variants(cfg: ExperimentConfig, variants=VARIANTS, n_jobs: int = 1):
    """Run several variants on shared graphs and embeddings (paired seeds).

    Returns ``{variant: (AggregateReport, [(graph_seed, EvalReport), ...])}``.
    """
    cfg.validate()
    variants = tuple(variants)
    results = _collect(cfg, variants, n_jobs)
    regenerated = sum(a for _, a, _ in results)
    out = {}
    for v in variants:
        per = [(g, r[v]) for g, _, r in results]
        out[v] = (aggregate([r for _, r in per], regenerated), per)
    return out


def run_trials(cfg: ExperimentConfig, n_jobs: int = 1):
    """Aggregate over ``cfg.trials`` independent trials of ``cfg.variant``.

    Returns ``(AggregateReport, [(graph_seed, EvalReport), ...])``; results are
    ordered by trial index regardless of ``n_jobs``.
    """
    return compare_variants(cfg, (cfg.variant,), n_jobs)[cfg.variant]
