"""2-D PCA views of embedding and common spaces, written as CSV and SVG."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .align import CommonSpace
from .embed import EmbeddingSpace
from .linalg import JacobiPCA

__all__ = ["Projection2D", "project_space", "project_embedding", "emit_plot", "read_csv"]

WIDTH, HEIGHT, MARGIN = 800, 600, 0.10
COLORS = {"state": "#1f77b4", "law": "#d62728"}


@dataclass(frozen=True)
class Projection2D:
    tokens: tuple[str, ...]
    kinds: tuple[str, ...]
    xy: np.ndarray
    explained_variance: tuple[float, float]

    def __len__(self) -> int:
        return len(self.tokens)


def _project(tokens, kinds, points: np.ndarray) -> Projection2D:
    if points.shape[0] < 3:
        raise ValueError("projection needs at least 3 points")
    pca = JacobiPCA(n_components=2).fit(points)
    xy = pca.transform(points)
    return Projection2D(tuple(tokens), tuple(kinds), xy,
                        tuple(float(v) for v in pca.explained_variance_ratio_))


def project_space(common: CommonSpace) -> Projection2D:
    """Joint PCA over states and aligned laws."""
    pts = np.hstack([common.state_vectors, common.law_vectors]).T
    kinds = ("state",) * common.n + ("law",) * common.m
    return _project(common.state_tokens + common.law_tokens, kinds, pts)


def project_embedding(space: EmbeddingSpace, kind: str) -> Projection2D:
    """PCA of a single space (the pre-alignment view)."""
    return _project(space.vocab, (kind,) * len(space), np.asarray(space.vectors))


def _svg(p: Projection2D) -> str:
    x, y = p.xy[:, 0], p.xy[:, 1]

    def scale(v, lo_px, hi_px):
        lo, hi = float(v.min()), float(v.max())
        span = hi - lo if hi > lo else 1.0
        return lo_px + (v - lo) / span * (hi_px - lo_px)

    px = scale(x, MARGIN * WIDTH, (1 - MARGIN) * WIDTH)
    py = scale(y, (1 - MARGIN) * HEIGHT, MARGIN * HEIGHT)  # y grows downwards
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}">',
           f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>']
    for tok, kind, cx, cy in zip(p.tokens, p.kinds, px, py):
        color = COLORS.get(kind, "#444444")
        if kind == "law":
            out.append(f'<rect x="{cx - 4:.2f}" y="{cy - 4:.2f}" width="8" height="8" '
                       f'fill="{color}"/>')
        else:
            out.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="5" fill="{color}"/>')
        out.append(f'<text x="{cx + 7:.2f}" y="{cy - 5:.2f}" font-size="11" '
                   f'font-family="sans-serif" fill="{color}">{escape(tok)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_plot(p: Projection2D, path) -> tuple[Path, Path]:
    """Write ``<path>.csv`` (``token,kind,x,y``) and ``<path>.svg``."""
    base = Path(path)
    if base.suffix in (".csv", ".svg"):
        base = base.with_suffix("")
    csv_path, svg_path = base.with_suffix(".csv"), base.with_suffix(".svg")
    try:
        with open(csv_path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["token", "kind", "x", "y"])
            for tok, kind, (x, y) in zip(p.tokens, p.kinds, p.xy):
                w.writerow([tok, kind, f"{x:.9g}", f"{y:.9g}"])
        svg_path.write_text(_svg(p), encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write plot to {base}: {exc}") from exc
    return csv_path, svg_path


def read_csv(path) -> list[tuple[str, str, float, float]]:
    with open(path, encoding="utf-8", newline="") as fh:
        return [(r["token"], r["kind"], float(r["x"]), float(r["y"]))
                for r in csv.DictReader(fh)]
