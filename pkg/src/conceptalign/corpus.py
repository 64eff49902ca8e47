"""Random walks over a :class:`GraphSystem`, emitted as paired state and law
sequences."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._utils import SEED_MASK, make_rng
from .graphsys import GraphSystem, LawToken

__all__ = [
    "WalkCorpus",
    "random_walk",
    "derive_laws",
    "build_corpus",
    "save_corpus",
    "load_corpus",
    "SINK_RETRIES",
]

SINK_RETRIES = 50


@dataclass(frozen=True)
class WalkCorpus:
    state_sequences: tuple[tuple[int, ...], ...]
    law_sequences: tuple[tuple[LawToken, ...], ...]
    graph: GraphSystem | None = None
    seed: int = 0

    def __post_init__(self):
        if len(self.state_sequences) != len(self.law_sequences):
            raise ValueError("state and law sequence counts differ")

    def __len__(self) -> int:
        return len(self.state_sequences)

    def state_tokens(self) -> list[list[str]]:
        return [[str(s) for s in seq] for seq in self.state_sequences]

    def law_tokens(self) -> list[list[str]]:
        return [[t.text for t in seq] for seq in self.law_sequences]

    def law_counts(self) -> Counter:
        return Counter(t.text for seq in self.law_sequences for t in seq)

    def state_counts(self) -> Counter:
        return Counter(str(s) for seq in self.state_sequences for s in seq)


def _pick(u: float, k: int) -> int:
    return min(int(u * k), k - 1)


def random_walk(g: GraphSystem, max_len: int, rng: np.random.Generator,
                retries: int = SINK_RETRIES) -> tuple[int, ...]:
    """One walk: uniform start state, uniform target length in ``{2..max_len}``,
    uniform successor at every step, stopping early at a sink.

    A walk that starts on a sink is redrawn up to ``retries`` times; after that
    the length-1 walk is returned as is.
    """
    if max_len < 2:
        raise ValueError("max_len must be >= 2")
    succ = g._succ
    walk: list[int] = []
    for _ in range(retries + 1):
        u = rng.random(max_len + 1)
        state = 1 + _pick(u[0], g.n)
        target_len = 2 + _pick(u[1], max_len - 1)
        walk = [state]
        for step in range(target_len - 1):
            nxt = succ[state]
            if not nxt:
                break
            state = nxt[_pick(u[2 + step], len(nxt))]
            walk.append(state)
        if len(walk) >= 2:
            break
    return tuple(walk)


def derive_laws(states) -> tuple[LawToken, ...]:
    if len(states) == 0:
        raise ValueError("state sequence must be nonempty")
    return tuple(LawToken(a, b) for a, b in zip(states[:-1], states[1:]))


def walk_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for walk ``index`` of a corpus seeded with ``seed``."""
    ss = np.random.SeedSequence([int(seed) & SEED_MASK, index])
    return np.random.Generator(np.random.PCG64(ss))


def build_corpus(g: GraphSystem, n_sequences: int, max_len: int, seed: int) -> WalkCorpus:
    """``n_sequences`` paired walks. Walk ``i`` draws from its own stream derived
    from ``(seed, i)``, so the result does not depend on evaluation order."""
    if n_sequences < 1:
        raise ValueError("n_sequences must be >= 1")
    states = tuple(random_walk(g, max_len, walk_rng(seed, i)) for i in range(n_sequences))
    laws = tuple(derive_laws(s) for s in states)
    return WalkCorpus(states, laws, g, int(seed) & SEED_MASK)


def save_corpus(corpus: WalkCorpus, states_path, laws_path) -> None:
    Path(states_path).write_text(
        "".join(" ".join(map(str, s)) + "\n" for s in corpus.state_sequences), encoding="utf-8")
    Path(laws_path).write_text(
        "".join(" ".join(t.text for t in seq) + "\n" for seq in corpus.law_sequences),
        encoding="utf-8")


def load_corpus(states_path, laws_path, graph: GraphSystem | None = None,
                seed: int = 0) -> WalkCorpus:
    """Read the two-file corpus format; checks pairing and, when ``graph`` is
    given, that every step is an edge."""
    try:
        states = tuple(tuple(int(x) for x in line.split())
                       for line in Path(states_path).read_text(encoding="utf-8").splitlines())
        laws = tuple(tuple(LawToken.parse(x) for x in line.split())
                     for line in Path(laws_path).read_text(encoding="utf-8").splitlines())
    except ValueError as exc:
        raise ValueError(f"malformed corpus file: {exc}") from exc
    if len(states) != len(laws):
        raise ValueError(f"{states_path} has {len(states)} lines but {laws_path} has {len(laws)}")
    for i, (s, t) in enumerate(zip(states, laws)):
        if derive_laws(s) != t:
            raise ValueError(f"line {i + 1}: law sequence does not match state sequence")
        if graph is not None:
            for law in t:
                if not graph.has_edge(law.source, law.target):
                    raise ValueError(f"line {i + 1}: {law.text} is not an edge of the graph")
    return WalkCorpus(states, laws, graph, seed)
