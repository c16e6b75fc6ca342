"""Shared builders: small graphs, toy language models, reference BFS."""

from __future__ import annotations

import random
from collections import deque
from pathlib import Path

import pytest

from navinstruct.navgraph import ConnectivityGraph, Vec3, Viewpoint


def build_graph(scan_id: str, nodes: dict, edges: list) -> ConnectivityGraph:
    viewpoints = {name: Viewpoint(name, Vec3(float(x), float(y), float(z)))
                  for name, (x, y, z) in nodes.items()}
    adjacency: dict[str, set] = {name: set() for name in nodes}
    for a, b in edges:
        adjacency[a].add(b)
        adjacency[b].add(a)
    return ConnectivityGraph(
        scan_id=scan_id,
        viewpoints=viewpoints,
        adjacency={n: tuple(sorted(s)) for n, s in adjacency.items()})


@pytest.fixture
def square_graph() -> ConnectivityGraph:
    # 2 m square, counterclockwise A -> B -> C -> D.
    return build_graph("sq", {
        "A": (0.0, 0.0, 0.0),
        "B": (2.0, 0.0, 0.0),
        "C": (2.0, 2.0, 0.0),
        "D": (0.0, 2.0, 0.0),
    }, [("A", "B"), ("B", "C"), ("C", "D"), ("D", "A")])


@pytest.fixture
def path_graph() -> ConnectivityGraph:
    # A - B - C - D - E - F in a straight line, 2 m apart.
    nodes = {c: (float(i) * 2.0, 0.0, 0.0) for i, c in enumerate("ABCDEF")}
    return build_graph("line", nodes,
                       [(a, b) for a, b in zip("ABCDE", "BCDEF")])


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    import navinstruct
    return Path(navinstruct.__file__).parent / "fixtures"


def bfs_distances(adjacency: dict, start: str) -> dict:
    """Reference hop counts, independent of the library traversal."""
    dist = {start: 0}
    queue = deque([start])
    while queue:
        node = queue.popleft()
        for nxt in adjacency[node]:
            if nxt not in dist:
                dist[nxt] = dist[node] + 1
                queue.append(nxt)
    return dist


def random_toy_lm(seed: int, vocab_size: int = 8, dim: int = 3) -> dict:
    """Dense random bigram model; every word row covers every continuation."""
    rng = random.Random(seed)
    words = [f"w{i}" for i in range(vocab_size)]
    bigram = {}
    for prev in ["<s>"] + words:
        targets = words + ["</s>"]
        weights = [rng.uniform(0.05, 1.0) for _ in targets]
        total = sum(weights)
        bigram[prev] = {t: w / total for t, w in zip(targets, weights)}
    reps = {}
    for tok in ["<s>", "</s>"] + words:
        reps[tok] = [rng.uniform(-1.0, 1.0) for _ in range(dim)]
        if all(abs(v) < 1e-6 for v in reps[tok]):
            reps[tok][0] = 1.0
    return {"tokens": ["<s>", "</s>"] + words, "bos": "<s>", "eos": "</s>",
            "bigram": bigram, "reps": reps}


def repetition_toy_lm() -> dict:
    """Greedy loops on the top word; orthogonal representations make any
    repeat maximally penalized, so contrastive search moves on."""
    return {
        "tokens": ["<s>", "</s>", "a", "b", "c"],
        "bos": "<s>",
        "eos": "</s>",
        "bigram": {
            "<s>": {"a": 0.9, "b": 0.05, "c": 0.03, "</s>": 0.02},
            "a": {"a": 0.9, "b": 0.07, "c": 0.02, "</s>": 0.01},
            "b": {"b": 0.9, "c": 0.07, "a": 0.02, "</s>": 0.01},
            "c": {"c": 0.9, "</s>": 0.08, "a": 0.01, "b": 0.01},
        },
        "reps": {
            "<s>": [1.0, 1.0, 1.0, 1.0],
            "</s>": [0.0, 0.0, 0.0, 1.0],
            "a": [1.0, 0.0, 0.0, 0.0],
            "b": [0.0, 1.0, 0.0, 0.0],
            "c": [0.0, 0.0, 1.0, 0.0],
        },
    }
