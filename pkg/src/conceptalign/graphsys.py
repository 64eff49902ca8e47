"""Random oriented graphs of physical states and transition laws.

States are the integers ``1..n``. A transition law is a directed edge
``(a, b)`` with ``a != b``, written ``"<a>s<b>"``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._utils import SEED_MASK, make_rng

__all__ = [
    "LawToken",
    "GraphSystem",
    "generate_graph",
    "scale_graph",
    "out_neighbors",
    "save_graph",
    "load_graph",
]

_LAW_RE = re.compile(r"^([1-9][0-9]*)s([1-9][0-9]*)$")


@dataclass(frozen=True, order=True)
class LawToken:
    """Directed transition ``source -> target`` between two distinct states."""

    source: int
    target: int

    def __post_init__(self):
        if self.source < 1 or self.target < 1:
            raise ValueError(f"state ids must be >= 1, got {self.source}, {self.target}")
        if self.source == self.target:
            raise ValueError(f"self-loop {self.source}s{self.target} is not a transition law")

    @property
    def text(self) -> str:
        return f"{self.source}s{self.target}"

    def __str__(self) -> str:
        return self.text

    @classmethod
    def parse(cls, text: str) -> "LawToken":
        m = _LAW_RE.match(text.strip())
        if m is None:
            raise ValueError(f"not a law token: {text!r}")
        return cls(int(m.group(1)), int(m.group(2)))


@dataclass(frozen=True)
class GraphSystem:
    """Immutable oriented graph on states ``1..n``.

    ``edges`` is kept sorted by ``(source, target)``; out-neighbour lists are
    precomputed at construction.
    """

    n: int
    edges: tuple[LawToken, ...]
    seed: int = 0
    _succ: tuple[tuple[int, ...], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("graph needs at least one state (n >= 1)")
        edges = tuple(sorted(self.edges))
        if len(set(edges)) != len(edges):
            raise ValueError("duplicate directed edge")
        for e in edges:
            if e.source > self.n or e.target > self.n:
                raise ValueError(f"edge {e.text} references a state outside [1, {self.n}]")
        succ: list[list[int]] = [[] for _ in range(self.n + 1)]
        for e in edges:
            succ[e.source].append(e.target)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "_succ", tuple(tuple(s) for s in succ))

    @property
    def m(self) -> int:
        return len(self.edges)

    @property
    def density(self) -> float:
        return self.m / self.n

    def out_neighbors(self, s: int) -> list[int]:
        if not 1 <= s <= self.n:
            raise ValueError(f"state {s} is not in [1, {self.n}]")
        return list(self._succ[s])

    def is_sink(self, s: int) -> bool:
        return len(self.out_neighbors(s)) == 0

    def has_edge(self, a: int, b: int) -> bool:
        return 1 <= a <= self.n and b in self._succ[a]


def generate_graph(n: int, m: int, seed: int) -> GraphSystem:
    """Sample ``m`` distinct ordered pairs ``(a, b)``, ``a != b``, uniformly
    without replacement from the ``n * (n - 1)`` possibilities."""
    if n < 1:
        raise ValueError("n must be >= 1")
    n_pairs = n * (n - 1)
    if m < 0 or m > n_pairs:
        raise ValueError(f"m={m} edges impossible on {n} states (at most {n_pairs})")
    seed = int(seed) & SEED_MASK
    if m == 0:
        return GraphSystem(n, (), seed)
    rng = make_rng(seed)
    idx = rng.choice(n_pairs, size=m, replace=False)
    # pair index -> (a, b): row a has n-1 slots, skipping the diagonal
    a = idx // (n - 1)
    b = idx % (n - 1)
    b = b + (b >= a)
    edges = tuple(LawToken(int(x) + 1, int(y) + 1) for x, y in zip(a, b))
    return GraphSystem(n, edges, seed)


def scale_graph(n: int, rho: float, seed: int) -> GraphSystem:
    """Graph with ``round(rho * n)`` edges, i.e. fixed law/state density."""
    return generate_graph(n, int(round(rho * n)), seed)


def out_neighbors(g: GraphSystem, s: int) -> list[int]:
    return g.out_neighbors(s)


def save_graph(g: GraphSystem, path) -> None:
    lines = [f"{g.n} {g.m} {g.seed}"]
    lines.extend(f"{e.source} {e.target}" for e in g.edges)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_graph(path) -> GraphSystem:
    text = Path(path).read_text(encoding="utf-8").split("\n")
    try:
        n, m, seed = (int(x) for x in text[0].split())
        edges = []
        for line in text[1:]:
            if not line.strip():
                continue
            a, b = (int(x) for x in line.split())
            edges.append(LawToken(a, b))
    except (ValueError, IndexError) as exc:
        raise ValueError(f"malformed graph file {path}: {exc}") from exc
    if len(edges) != m:
        raise ValueError(f"malformed graph file {path}: header says {m} edges, found {len(edges)}")
    return GraphSystem(n, tuple(edges), seed)


def adjacency_matrix(g: GraphSystem) -> np.ndarray:
    """Dense 0/1 adjacency, row = source, column = target (0-based)."""
    a = np.zeros((g.n, g.n), dtype=np.int8)
    for e in g.edges:
        a[e.source - 1, e.target - 1] = 1
    return a
