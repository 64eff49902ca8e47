"""Skip-gram embeddings with negative sampling.

The SGD loop is compiled with numba and runs single-threaded so that a fixed
corpus, config and seed give bitwise-identical vectors.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numba
import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._utils import derive_seed, make_rng

__all__ = [
    "EmbeddingSpace",
    "TrainConfig",
    "SkipGramEmbedder",
    "train_skipgram",
    "normalize",
    "matrix_of",
    "save_embedding",
    "load_embedding",
]


class EmptyVocabularyError(ValueError):
    pass


@dataclass(frozen=True)
class EmbeddingSpace:
    """Token vocabulary with one ``dim``-vector per token.

    ``vectors`` has shape ``(len(vocab), dim)``; row ``i`` belongs to
    ``vocab[i]``. Vocabulary order is by descending frequency, ties by token
    text.
    """

    dim: int
    vocab: tuple[str, ...]
    vectors: np.ndarray
    frequencies: tuple[int, ...]
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        vectors = np.array(self.vectors, dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape != (len(self.vocab), self.dim):
            raise ValueError(
                f"vectors shape {vectors.shape} does not match ({len(self.vocab)}, {self.dim})")
        if not np.all(np.isfinite(vectors)):
            raise ValueError("embedding contains NaN or Inf")
        if len(set(self.vocab)) != len(self.vocab):
            raise ValueError("duplicate tokens in vocabulary")
        if len(self.frequencies) != len(self.vocab) or any(f <= 0 for f in self.frequencies):
            raise ValueError("frequencies must be positive, one per token")
        vectors.setflags(write=False)
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "vocab", tuple(self.vocab))
        object.__setattr__(self, "frequencies", tuple(int(f) for f in self.frequencies))
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(self.vocab)})

    def __len__(self) -> int:
        return len(self.vocab)

    def __contains__(self, token) -> bool:
        return token in self._index

    def index(self, token: str) -> int:
        try:
            return self._index[token]
        except KeyError:
            raise KeyError(f"token {token!r} not in vocabulary") from None

    def vector(self, token: str) -> np.ndarray:
        return self.vectors[self.index(token)]

    def frequency(self, token: str) -> int:
        return self.frequencies[self.index(token)]

    def subset(self, tokens: Iterable[str]) -> "EmbeddingSpace":
        """Restriction to ``tokens`` (kept in this space's order)."""
        keep = set(tokens)
        rows = [i for i, t in enumerate(self.vocab) if t in keep]
        return EmbeddingSpace(self.dim, tuple(self.vocab[i] for i in rows),
                              self.vectors[rows], tuple(self.frequencies[i] for i in rows))


@dataclass(frozen=True)
class TrainConfig:
    dim: int = 10
    window: int = 5
    negatives: int = 5
    epochs: int = 5
    initial_lr: float = 0.025
    min_lr: float = 1e-4
    min_count: int = 1
    seed: int = 0
    sample: float = 0.0
    shrink_window: bool = False

    def __post_init__(self):
        bad = []
        if self.dim < 1:
            bad.append("dim >= 1")
        if self.window < 1:
            bad.append("window >= 1")
        if self.negatives < 0:
            bad.append("negatives >= 0")
        if self.epochs < 1:
            bad.append("epochs >= 1")
        if not self.initial_lr > 0:
            bad.append("initial_lr > 0")
        if not 0 <= self.min_lr <= self.initial_lr:
            bad.append("0 <= min_lr <= initial_lr")
        if self.min_count < 1:
            bad.append("min_count >= 1")
        if self.sample < 0:
            bad.append("sample >= 0")
        if bad:
            raise ValueError("invalid TrainConfig: need " + ", ".join(bad))


@numba.njit(cache=True)
def _xorshift(state):
    """xorshift64* step: returns ``(new_state, uniform float in [0, 1))``."""
    state ^= state >> np.uint64(12)
    state ^= state << np.uint64(25)
    state ^= state >> np.uint64(27)
    r = (state * np.uint64(2685821657736338717)) >> np.uint64(11)
    return state, np.float64(r) * (1.0 / 9007199254740992.0)


@numba.njit(cache=True)
def _sgns_epochs(tokens, offsets, syn0, syn1, cum_noise, keep_prob, window, shrink_window,
                 negatives, epochs, lr0, min_lr, seed):
    state = np.uint64(seed)  # must be nonzero
    n_sent = offsets.shape[0] - 1
    total = tokens.shape[0] * epochs
    dim = syn0.shape[1]
    neu1e = np.empty(dim)
    buf = np.empty(tokens.shape[0], dtype=np.int64)
    losses = np.zeros(epochs)
    processed = 0
    for ep in range(epochs):
        loss_sum = 0.0
        n_pairs = 0
        for s in range(n_sent):
            start = offsets[s]
            stop = offsets[s + 1]
            length = 0
            for i in range(start, stop):
                t = tokens[i]
                if keep_prob[t] < 1.0:
                    state, u = _xorshift(state)
                    if u >= keep_prob[t]:
                        continue
                buf[length] = t
                length += 1
            alpha = lr0 - (lr0 - min_lr) * (processed / total)
            if alpha < min_lr:
                alpha = min_lr
            processed += stop - start
            for i in range(length):
                w = window
                if shrink_window:
                    state, u = _xorshift(state)
                    w = window - min(int(u * window), window - 1)
                center = buf[i]
                lo = max(0, i - w)
                hi = min(length, i + w + 1)
                for j in range(lo, hi):
                    if j == i:
                        continue
                    context = buf[j]
                    neu1e[:] = 0.0
                    for k in range(negatives + 1):
                        if k == 0:
                            target = context
                            label = 1.0
                        else:
                            state, u = _xorshift(state)
                            target = np.searchsorted(cum_noise, u, side="right")
                            if target == context:
                                continue
                            label = 0.0
                        f = 0.0
                        for c in range(dim):
                            f += syn0[center, c] * syn1[target, c]
                        # sigmoid(f) and log(sigmoid(f)) from one exp
                        if f >= 0:
                            e = np.exp(-f)
                            sig = 1.0 / (1.0 + e)
                            log_sig = -np.log1p(e)
                        else:
                            e = np.exp(f)
                            sig = e / (1.0 + e)
                            log_sig = f - np.log1p(e)
                        if label > 0.5:
                            loss_sum -= log_sig
                        else:
                            loss_sum -= log_sig - f
                        g = (label - sig) * alpha
                        for c in range(dim):
                            neu1e[c] += g * syn1[target, c]
                            syn1[target, c] += g * syn0[center, c]
                    for c in range(dim):
                        syn0[center, c] += neu1e[c]
                    n_pairs += 1
        losses[ep] = loss_sum / n_pairs if n_pairs > 0 else 0.0
    return losses


def _build_vocab(sequences: Sequence[Sequence[str]], min_count: int):
    counts = Counter(t for seq in sequences for t in seq)
    kept = sorted((t for t, c in counts.items() if c >= min_count),
                  key=lambda t: (-counts[t], t))
    if not kept:
        raise EmptyVocabularyError(f"no token occurs at least min_count={min_count} times")
    return kept, [counts[t] for t in kept]


def _fit(sequences, cfg: TrainConfig):
    sequences = [[str(t) for t in seq] for seq in sequences]
    vocab, freqs = _build_vocab(sequences, cfg.min_count)
    index = {t: i for i, t in enumerate(vocab)}
    ids = [[index[t] for t in seq if t in index] for seq in sequences]
    lengths = np.array([len(s) for s in ids], dtype=np.int64)
    offsets = np.zeros(len(ids) + 1, dtype=np.int64)
    np.cumsum(lengths, out=offsets[1:])
    tokens = np.fromiter((i for s in ids for i in s), dtype=np.int64, count=int(offsets[-1]))

    rng = make_rng(derive_seed(cfg.seed, 0))
    d = cfg.dim
    syn0 = rng.uniform(-0.5 / d, 0.5 / d, size=(len(vocab), d))
    syn1 = np.zeros((len(vocab), d))
    noise = np.asarray(freqs, dtype=np.float64) ** 0.75
    cum_noise = np.cumsum(noise / noise.sum())
    cum_noise[-1] = 1.0
    f = np.asarray(freqs, dtype=np.float64)
    if cfg.sample > 0:
        # frequent-token downsampling, keep probability as in word2vec
        threshold = cfg.sample * f.sum()
        keep_prob = np.minimum(1.0, (np.sqrt(f / threshold) + 1.0) * threshold / f)
    else:
        keep_prob = np.ones_like(f)
    kernel_seed = np.uint64(derive_seed(cfg.seed, 1) | 1)
    losses = _sgns_epochs(tokens, offsets, syn0, syn1, cum_noise, keep_prob, cfg.window,
                          cfg.shrink_window, cfg.negatives, cfg.epochs, cfg.initial_lr,
                          cfg.min_lr, kernel_seed)
    return EmbeddingSpace(d, tuple(vocab), syn0, tuple(freqs)), losses


def train_skipgram(sequences: Sequence[Sequence[str]], cfg: TrainConfig) -> EmbeddingSpace:
    """Train skip-gram with negative sampling over token ``sequences``.

    Every token within ``cfg.window`` positions of a centre token is a positive
    context (fixed window, truncated at sequence ends). Each positive pair is
    contrasted with ``cfg.negatives`` draws from the unigram^0.75 noise
    distribution; the learning rate decays linearly from ``initial_lr`` to
    ``min_lr`` over all centre positions of all epochs. Only the input
    (projection) vectors are returned.
    """
    return _fit(sequences, cfg)[0]


class SkipGramEmbedder(TransformerMixin, BaseEstimator):
    """Estimator wrapper around :func:`train_skipgram`.

    ``fit`` takes a list of token sequences; ``transform`` maps a list of tokens
    to an ``(n_tokens, dim)`` array.

    Attributes
    ----------
    space_ : EmbeddingSpace
    loss_history_ : ndarray of shape (epochs,)
        Mean logistic loss per positive pair, per epoch.
    """

    def __init__(self, dim=10, window=5, negatives=5, epochs=5, initial_lr=0.025,
                 min_lr=1e-4, min_count=1, random_state=0):
        self.dim = dim
        self.window = window
        self.negatives = negatives
        self.epochs = epochs
        self.initial_lr = initial_lr
        self.min_lr = min_lr
        self.min_count = min_count
        self.random_state = random_state

    def _config(self) -> TrainConfig:
        return TrainConfig(self.dim, self.window, self.negatives, self.epochs,
                           self.initial_lr, self.min_lr, self.min_count, int(self.random_state))

    def fit(self, X, y=None):
        self.space_, self.loss_history_ = _fit(X, self._config())
        return self

    def transform(self, X):
        check_is_fitted(self, "space_")
        return np.vstack([self.space_.vector(str(t)) for t in X])

    def fit_transform(self, X, y=None):
        # fit consumes sequences, transform consumes tokens; the natural
        # output is the whole vocabulary
        self.fit(X)
        return np.array(self.space_.vectors)


def normalize(e: EmbeddingSpace) -> EmbeddingSpace:
    norms = np.linalg.norm(e.vectors, axis=1)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise ValueError(f"cannot normalize zero vector for token {e.vocab[zero[0]]!r}")
    return EmbeddingSpace(e.dim, e.vocab, e.vectors / norms[:, None], e.frequencies)


def matrix_of(e: EmbeddingSpace, token_order: Sequence[str]) -> np.ndarray:
    """``dim x k`` matrix whose columns are the vectors of ``token_order``."""
    rows = [e.index(t) for t in token_order]
    return np.array(e.vectors[rows].T)


def save_embedding(e: EmbeddingSpace, path) -> None:
    """Write ``|vocab| dim`` then ``token v1 .. vd`` lines (17 significant
    digits, exact for float64). Frequencies go to a ``<path>.freq`` sidecar."""
    lines = [f"{len(e)} {e.dim}"]
    for tok, vec in zip(e.vocab, e.vectors):
        lines.append(tok + " " + " ".join(f"{v:.17g}" for v in vec))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    Path(str(path) + ".freq").write_text(
        "".join(f"{t} {f}\n" for t, f in zip(e.vocab, e.frequencies)), encoding="utf-8")


def load_embedding(path) -> EmbeddingSpace:
    """Inverse of :func:`save_embedding`.

    Without a ``.freq`` sidecar, rank-order pseudo counts ``(V, V-1, .., 1)``
    are assigned, which preserves the frequency ordering.
    """
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    try:
        size, dim = (int(x) for x in lines[0].split())
        vocab, rows = [], []
        for line in lines[1:1 + size]:
            parts = line.split()
            if len(parts) != dim + 1:
                raise ValueError(f"expected {dim + 1} fields, got {len(parts)}")
            vocab.append(parts[0])
            rows.append([float(x) for x in parts[1:]])
    except (ValueError, IndexError) as exc:
        raise ValueError(f"malformed embedding file {path}: {exc}") from exc
    if len(vocab) != size:
        raise ValueError(f"malformed embedding file {path}: expected {size} rows")
    freq_path = Path(str(path) + ".freq")
    if freq_path.exists():
        freq = dict(line.split() for line in freq_path.read_text(encoding="utf-8").splitlines())
        freqs = [int(freq[t]) for t in vocab]
    else:
        freqs = list(range(size, 0, -1))
    vectors = np.array(rows, dtype=np.float64).reshape(size, dim)
    return EmbeddingSpace(dim, tuple(vocab), vectors, tuple(freqs))
