"""Shared fixtures and minimal model stand-ins."""

import numpy as np
import pytest

from walkgen.graph import Graph
from walkgen.models.base import new_counters


@pytest.fixture
def triangle():
    return Graph(3, [(0, 1), (1, 2), (0, 2)])


@pytest.fixture
def path3():
    return Graph(3, [(0, 1), (1, 2)])


@pytest.fixture
def star5():
    return Graph(6, [(0, i) for i in range(1, 6)])


@pytest.fixture
def k4():
    return Graph(4, [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)])


@pytest.fixture
def two_node():
    return Graph(2, [(0, 1)])


class ReplayModel:
    """Replays fixed walks: walk identity is keyed by the start node.

    Beyond the stored length it emits ``overflow_token`` (default: loops on
    the last stored node). Implements the same inference interface as the
    real models.
    """

    kind = "replay"

    def __init__(self, walks, vocab, overflow_token=None):
        self.vocab = vocab
        self.start_token = vocab - 1
        self.by_start = {int(w[0]): [int(x) for x in w] for w in walks}
        if len(self.by_start) != len(walks):
            raise ValueError("replay walks must have unique start nodes")
        self.overflow_token = overflow_token
        self.counters = new_counters()

    def reset_counters(self):
        self.counters = new_counters()

    def _next(self, start, pos):
        walk = self.by_start[start]
        if pos < len(walk):
            return walk[pos]
        return self.overflow_token if self.overflow_token is not None else walk[-1]

    def _dist(self, token):
        probs = np.zeros(self.vocab)
        probs[token] = 1.0
        return probs

    def begin(self, prefixes):
        prefixes = np.asarray(prefixes, dtype=np.int64)
        state = []
        rows = []
        for row in prefixes:
            nodes = [int(t) for t in row if t != self.start_token]
            start, pos = nodes[0], len(nodes)
            state.append((start, pos))
            rows.append(self._dist(self._next(start, pos)))
        self.counters["prefix_sequences"] += len(state)
        self.counters["prefix_tokens"] += prefixes.size
        return np.stack(rows), state

    def extend(self, state, tokens):
        new_state = [(s, pos + 1) for (s, pos), _ in zip(state, tokens)]
        rows = [self._dist(self._next(s, pos)) for s, pos in new_state]
        self.counters["incremental_steps"] += len(tokens)
        return np.stack(rows), new_state

    def next_distribution(self, prefix):
        probs, _ = self.begin(np.array([list(prefix)], dtype=np.int64))
        return probs[0]
