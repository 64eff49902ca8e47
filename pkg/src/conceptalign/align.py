"""Orthogonal Procrustes alignment of the law embedding onto the state embedding.

Matrices follow the column convention: a ``d x k`` matrix holds one token
vector per column. The estimator :class:`OrthogonalProcrustes` uses the
scikit-learn row convention instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ._utils import check_finite, make_rng
from .embed import EmbeddingSpace, matrix_of
from .graphsys import LawToken
from .linalg import svd

__all__ = [
    "AlignmentMap",
    "CommonSpace",
    "OrthogonalProcrustes",
    "restrict_laws",
    "rank_tokens",
    "frequency_pairing",
    "source_pairing",
    "procrustes_fit",
    "transport",
    "translate_centroids",
    "centroid_offset",
    "random_orthogonal",
    "baseline_centroid_random",
    "align_spaces",
    "save_alignment",
    "load_alignment",
]

PAIRINGS = ("frequency", "source")


@dataclass(frozen=True)
class AlignmentMap:
    """``Y -> scale * omega @ Y + translation``.

    ``residual`` is ``||X - omega @ Y_restricted||_F`` on the fitted
    ``pairing`` (``(state, law)`` token pairs). ``excluded`` lists tokens left
    out of the common space (outlier removal).
    """

    omega: np.ndarray
    pairing: tuple[tuple[str, str], ...] = ()
    residual: float = 0.0
    translation: np.ndarray | None = None
    scale: float = 1.0
    excluded: tuple[str, ...] = ()

    def __post_init__(self):
        omega = check_finite(self.omega, "omega")
        if omega.ndim != 2 or omega.shape[0] != omega.shape[1]:
            raise ValueError("omega must be square")
        if not np.allclose(omega.T @ omega, np.eye(omega.shape[0]), atol=1e-6):
            raise ValueError("omega is not orthogonal")
        object.__setattr__(self, "omega", omega)
        if self.translation is not None:
            t = check_finite(self.translation, "translation").reshape(-1)
            if t.shape[0] != omega.shape[0]:
                raise ValueError("translation length must equal d")
            object.__setattr__(self, "translation", t)
        object.__setattr__(self, "pairing", tuple(tuple(p) for p in self.pairing))
        object.__setattr__(self, "excluded", tuple(self.excluded))

    @property
    def dim(self) -> int:
        return self.omega.shape[0]


@dataclass(frozen=True)
class CommonSpace:
    """State vectors ``X`` (``d x n``) and aligned law vectors (``d x m``)."""

    state_tokens: tuple[str, ...]
    state_vectors: np.ndarray
    law_tokens: tuple[str, ...]
    law_vectors: np.ndarray
    _state_idx: dict = field(init=False, repr=False, compare=False)
    _law_idx: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        x = check_finite(self.state_vectors, "state vectors")
        y = check_finite(self.law_vectors, "law vectors")
        if x.ndim != 2 or y.ndim != 2 or x.shape[0] != y.shape[0]:
            raise ValueError(f"dimension mismatch: states {x.shape}, laws {y.shape}")
        if x.shape[1] != len(self.state_tokens) or y.shape[1] != len(self.law_tokens):
            raise ValueError("token lists do not match matrix widths")
        object.__setattr__(self, "state_vectors", x)
        object.__setattr__(self, "law_vectors", y)
        object.__setattr__(self, "state_tokens", tuple(self.state_tokens))
        object.__setattr__(self, "law_tokens", tuple(self.law_tokens))
        object.__setattr__(self, "_state_idx", {t: i for i, t in enumerate(self.state_tokens)})
        object.__setattr__(self, "_law_idx", {t: i for i, t in enumerate(self.law_tokens)})

    @property
    def dim(self) -> int:
        return self.state_vectors.shape[0]

    @property
    def n(self) -> int:
        return len(self.state_tokens)

    @property
    def m(self) -> int:
        return len(self.law_tokens)

    def state(self, token) -> np.ndarray:
        try:
            return self.state_vectors[:, self._state_idx[str(token)]]
        except KeyError:
            raise KeyError(f"state {token!s} not in common space") from None

    def law(self, token) -> np.ndarray:
        key = token.text if isinstance(token, LawToken) else str(token)
        try:
            return self.law_vectors[:, self._law_idx[key]]
        except KeyError:
            raise KeyError(f"law {key} not in common space") from None

    def with_laws(self, law_vectors: np.ndarray, law_tokens=None) -> "CommonSpace":
        return CommonSpace(self.state_tokens, self.state_vectors,
                           self.law_tokens if law_tokens is None else law_tokens, law_vectors)

    def scaled(self, factor: float) -> "CommonSpace":
        return CommonSpace(self.state_tokens, self.state_vectors * factor,
                           self.law_tokens, self.law_vectors * factor)

    def rotated(self, q: np.ndarray) -> "CommonSpace":
        return CommonSpace(self.state_tokens, q @ self.state_vectors,
                           self.law_tokens, q @ self.law_vectors)


def rank_tokens(space: EmbeddingSpace) -> list[str]:
    """Tokens by descending corpus count, ties by ascending token text."""
    return sorted(space.vocab, key=lambda t: (-space.frequency(t), t))


def restrict_laws(law_space: EmbeddingSpace, n: int) -> list[str]:
    """The ``n`` most frequent law tokens."""
    if n > len(law_space):
        raise ValueError(f"cannot restrict to {n} laws: vocabulary has only {len(law_space)}")
    return rank_tokens(law_space)[:n]


def frequency_pairing(state_space: EmbeddingSpace, law_space: EmbeddingSpace,
                      n: int | None = None) -> list[tuple[str, str]]:
    """i-th most frequent state faces the i-th most frequent law."""
    states = rank_tokens(state_space)
    n = len(states) if n is None else n
    return list(zip(states[:n], restrict_laws(law_space, n)))


def source_pairing(state_space: EmbeddingSpace, law_space: EmbeddingSpace,
                   n: int | None = None) -> list[tuple[str, str]]:
    """Each of the top-``n`` laws faces its own source state."""
    n = len(state_space) if n is None else n
    pairs = []
    for law in restrict_laws(law_space, n):
        src = str(LawToken.parse(law).source)
        if src in state_space:
            pairs.append((src, law))
    return pairs


def procrustes_fit(X, Y_restricted, pairing: Sequence[tuple[str, str]] = ()) -> AlignmentMap:
    """Orthogonal ``omega`` minimising ``||X - omega @ Y||_F``.

    With ``X @ Y.T = U S V^T`` the minimiser is ``U @ V.T``.
    """
    X = check_finite(X, "X")
    Y = check_finite(Y_restricted, "Y")
    if X.shape != Y.shape:
        raise ValueError(f"shape mismatch: X {X.shape} vs Y {Y.shape}")
    u, _, v = svd(X @ Y.T)
    omega = u @ v.T
    residual = float(np.linalg.norm(X - omega @ Y))
    return AlignmentMap(omega, tuple(pairing), residual)


def transport(amap: AlignmentMap, Y_full) -> np.ndarray:
    Y = check_finite(Y_full, "Y")
    if Y.ndim != 2 or Y.shape[0] != amap.dim:
        raise ValueError(f"dimension mismatch: map is {amap.dim}-d, Y has shape {Y.shape}")
    out = amap.scale * (amap.omega @ Y)
    if amap.translation is not None:
        out = out + amap.translation[:, None]
    return out


def centroid_offset(common: CommonSpace) -> np.ndarray:
    """Offset that moves the law centroid onto the state centroid."""
    return common.state_vectors.mean(axis=1) - common.law_vectors.mean(axis=1)


def translate_centroids(common: CommonSpace, target) -> CommonSpace:
    """Shift every law vector by the offset ``target``; states untouched."""
    t = check_finite(target, "offset").reshape(-1)
    if t.shape[0] != common.dim:
        raise ValueError("offset length must equal d")
    return common.with_laws(common.law_vectors + t[:, None])


def random_orthogonal(d: int, seed: int) -> np.ndarray:
    """Haar-distributed orthogonal matrix (QR of a Gaussian, sign-corrected)."""
    q, r = np.linalg.qr(make_rng(seed).standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def _rms_radius(M: np.ndarray) -> float:
    c = M - M.mean(axis=1, keepdims=True)
    return float(np.sqrt(np.mean(np.sum(c * c, axis=0))))


def baseline_centroid_random(X, Y, seed: int) -> AlignmentMap:
    """Negative control: scale ``Y`` to the RMS radius of ``X``, rotate it by a
    random orthogonal matrix and move its centroid onto that of ``X``."""
    X = check_finite(X, "X")
    Y = check_finite(Y, "Y")
    ry = _rms_radius(Y)
    scale = _rms_radius(X) / ry if ry > 0 else 1.0
    q = random_orthogonal(X.shape[0], seed)
    t = X.mean(axis=1) - scale * (q @ Y.mean(axis=1))
    return AlignmentMap(q, (), 0.0, t, scale)


def align_spaces(state_space: EmbeddingSpace, law_space: EmbeddingSpace,
                 pairing: str = "frequency", translate: bool = False):
    """Fit on the restricted laws and transport the full law set.

    Spaces are used as given; normalise them beforehand. Returns
    ``(AlignmentMap, CommonSpace)``.
    """
    if pairing not in PAIRINGS:
        raise ValueError(f"pairing must be one of {PAIRINGS}")
    pairs = (frequency_pairing if pairing == "frequency" else source_pairing)(
        state_space, law_space)
    X = matrix_of(state_space, [s for s, _ in pairs])
    Yr = matrix_of(law_space, [t for _, t in pairs])
    amap = procrustes_fit(X, Yr, pairs)
    states = list(state_space.vocab)
    laws = list(law_space.vocab)
    Xall = matrix_of(state_space, states)
    Yall = transport(amap, matrix_of(law_space, laws))
    if translate:
        offset = Xall.mean(axis=1) - Yall.mean(axis=1)
        amap = AlignmentMap(amap.omega, amap.pairing, amap.residual, offset)
        Yall = Yall + offset[:, None]
    return amap, CommonSpace(tuple(states), Xall, tuple(laws), Yall)


class OrthogonalProcrustes(TransformerMixin, BaseEstimator):
    """Row-convention estimator: ``fit(X, y)`` learns the orthogonal map taking
    the rows of ``X`` onto the paired rows of ``y``; ``transform`` applies it.

    Attributes
    ----------
    omega_ : ndarray (d, d)
        Acts on column vectors, so ``transform(X) == X @ omega_.T``.
    residual_ : float
    """

    def fit(self, X, y):
        X = check_array(X, dtype=np.float64)
        y = check_array(y, dtype=np.float64)
        amap = procrustes_fit(y.T, X.T)
        self.omega_ = amap.omega
        self.residual_ = amap.residual
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "omega_")
        return check_array(X, dtype=np.float64) @ self.omega_.T


def _fmt(values) -> str:
    return " ".join(f"{float(v):.17g}" for v in values)


def save_alignment(amap: AlignmentMap, path) -> None:
    lines = [f"d {amap.dim}"]
    lines += [_fmt(row) for row in amap.omega]
    lines.append(f"scale {amap.scale:.17g}")
    lines.append("translation " + ("none" if amap.translation is None else _fmt(amap.translation)))
    lines.append(f"residual {amap.residual:.17g}")
    lines.append(f"pairing {len(amap.pairing)}")
    lines += [f"{s} {t}" for s, t in amap.pairing]
    lines.append("excluded " + " ".join(amap.excluded))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_alignment(path) -> AlignmentMap:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    try:
        d = int(lines[0].split()[1])
        omega = np.array([[float(x) for x in lines[1 + i].split()] for i in range(d)])
        k = 1 + d
        scale = float(lines[k].split()[1])
        tr = lines[k + 1].split()[1:]
        translation = None if tr == ["none"] else np.array([float(x) for x in tr])
        residual = float(lines[k + 2].split()[1])
        npairs = int(lines[k + 3].split()[1])
        pairing = tuple(tuple(lines[k + 4 + i].split()) for i in range(npairs))
        excluded = tuple(lines[k + 4 + npairs].split()[1:])
    except (ValueError, IndexError) as exc:
        raise ValueError(f"malformed alignment file {path}: {exc}") from exc
    return AlignmentMap(omega, pairing, residual, translation, scale, excluded)
