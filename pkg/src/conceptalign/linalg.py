"""Dense SVD by one-sided Jacobi rotations, and PCA built on it."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ._utils import check_finite

__all__ = ["ConvergenceError", "svd", "pca_project", "JacobiPCA"]

MAX_SWEEPS = 100
OFF_DIAGONAL_TOL = 1e-12


class ConvergenceError(ArithmeticError):
    def __init__(self, sweeps: int, residual: float):
        super().__init__(f"Jacobi SVD did not converge after {sweeps} sweeps "
                         f"(max relative off-diagonal {residual:.3e})")
        self.sweeps = sweeps
        self.residual = residual


def _flip_largest_positive(a: np.ndarray) -> np.ndarray:
    """Per-column signs making each column's largest-|.| entry nonnegative."""
    idx = np.argmax(np.abs(a), axis=0)
    signs = np.sign(a[idx, np.arange(a.shape[1])])
    signs[signs == 0] = 1.0
    return signs


def _complete_orthonormal(u: np.ndarray, good: np.ndarray) -> np.ndarray:
    """Replace columns of ``u`` not flagged ``good`` with unit vectors
    orthogonal to every other column (Gram-Schmidt over the standard basis)."""
    rows = u.shape[0]
    basis = [u[:, j] for j in np.flatnonzero(good)]
    out = u.copy()
    candidates = iter(range(rows))
    for j in np.flatnonzero(~good):
        for e in candidates:
            v = np.zeros(rows)
            v[e] = 1.0
            for _ in range(2):
                for b in basis:
                    v -= np.dot(b, v) * b
            norm = np.linalg.norm(v)
            if norm > 1e-8:
                v /= norm
                basis.append(v)
                out[:, j] = v
                break
    return out


def svd(a, tol: float = OFF_DIAGONAL_TOL, max_sweeps: int = MAX_SWEEPS):
    """Thin SVD ``a = U @ diag(sigma) @ V.T`` by one-sided (Hestenes) Jacobi.

    Returns ``(U, sigma, V)`` with ``k = min(rows, cols)`` columns in ``U`` and
    ``V`` and ``sigma`` descending. Pairs of working columns are rotated until
    every pair is orthogonal to ``tol`` relative to their norms. Each ``u_i``
    is signed so that its largest-magnitude entry is nonnegative (``v_i``
    follows).

    Raises ConvergenceError after ``max_sweeps`` sweeps.
    """
    a = check_finite(a, "matrix")
    if a.ndim != 2:
        raise ValueError("svd expects a 2-D matrix")
    rows, cols = a.shape
    if rows < cols:
        u, s, v = svd(a.T, tol, max_sweeps)
        return v, s, u

    # work at unit scale so squared norms neither overflow nor underflow
    scale = float(np.max(np.abs(a))) if a.size else 0.0
    w = a / scale if scale > 0 else a.copy()
    v = np.eye(cols)
    # columns below this squared norm are numerically zero and never rotated
    negligible = (np.finfo(float).eps * np.linalg.norm(w)) ** 2
    for sweep in range(max_sweeps):
        rotated = False
        for p in range(cols - 1):
            for q in range(p + 1, cols):
                alpha = np.dot(w[:, p], w[:, p])
                beta = np.dot(w[:, q], w[:, q])
                gamma = np.dot(w[:, p], w[:, q])
                if alpha <= negligible or beta <= negligible:
                    continue
                if gamma == 0.0 or abs(gamma) <= tol * np.sqrt(alpha) * np.sqrt(beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = np.copysign(1.0, zeta) / (abs(zeta) + np.hypot(1.0, zeta))
                c = 1.0 / np.hypot(1.0, t)
                s = c * t
                wp, wq = w[:, p].copy(), w[:, q]
                w[:, p] = c * wp - s * wq
                w[:, q] = s * wp + c * wq
                vp, vq = v[:, p].copy(), v[:, q]
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
        if not rotated:
            break
    else:
        norms = np.linalg.norm(w, axis=0)
        gram = np.abs(w.T @ w)
        denom = np.outer(norms, norms)
        np.fill_diagonal(gram, 0.0)
        residual = float(np.max(np.divide(gram, denom, out=np.zeros_like(gram),
                                          where=denom > 0)))
        raise ConvergenceError(max_sweeps, residual)

    sigma = np.linalg.norm(w, axis=0)
    order = np.argsort(-sigma, kind="stable")
    sigma = sigma[order]
    w = w[:, order]
    v = v[:, order]
    cutoff = max(rows, cols) * np.finfo(float).eps * (sigma[0] if cols else 0.0)
    good = sigma > cutoff
    u = np.zeros_like(w)
    u[:, good] = w[:, good] / sigma[good]
    if not np.all(good):
        u = _complete_orthonormal(u, good)
    signs = _flip_largest_positive(u)
    return u * signs, sigma * scale if scale > 0 else sigma, v * signs


def pca_project(points, components: int = 2):
    """Project the columns of ``points`` (``d x k``) onto their top principal axes.

    Returns ``(projection, explained_variance_ratio)`` where ``projection`` is
    ``components x k``.
    """
    pca = JacobiPCA(n_components=components).fit(np.asarray(points, dtype=float).T)
    return pca.transform(np.asarray(points, dtype=float).T).T, pca.explained_variance_ratio_


class JacobiPCA(TransformerMixin, BaseEstimator):
    """PCA through the Jacobi SVD of the centred data (no covariance matrix).

    Rows of ``X`` are samples. Each component is signed so that its
    largest-magnitude loading is nonnegative, which makes the result
    independent of sample order.
    """

    def __init__(self, n_components=2):
        self.n_components = n_components

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64, ensure_min_samples=2)
        k, d = X.shape
        if not 1 <= self.n_components <= min(d, k):
            raise ValueError(f"n_components={self.n_components} must be in [1, {min(d, k)}]")
        self.mean_ = X.mean(axis=0)
        centred = X - self.mean_
        if not np.any(centred):
            raise ValueError("degenerate input: all points identical")
        _, s, v = svd(centred)
        signs = _flip_largest_positive(v)
        v = v * signs
        var = s ** 2
        self.components_ = v[:, : self.n_components].T
        self.singular_values_ = s[: self.n_components]
        self.explained_variance_ = var[: self.n_components] / max(k - 1, 1)
        self.explained_variance_ratio_ = var[: self.n_components] / var.sum()
        self.n_features_in_ = d
        return self

    def transform(self, X):
        check_is_fitted(self, "components_")
        X = check_array(X, dtype=np.float64)
        return (X - self.mean_) @ self.components_.T
