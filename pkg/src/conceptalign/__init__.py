"""Align skip-gram embeddings of graph states and transition laws."""

from .align import AlignmentMap, CommonSpace, OrthogonalProcrustes, procrustes_fit
from .corpus import WalkCorpus, build_corpus
from .embed import EmbeddingSpace, SkipGramEmbedder, TrainConfig, train_skipgram
from .eval import EvalReport, evaluate, isosceles_rank
from .experiment import ExperimentConfig, compare_variants, run_trials
from .graphsys import GraphSystem, LawToken, generate_graph, scale_graph
from .linalg import JacobiPCA, svd

__version__ = "0.1.0"
