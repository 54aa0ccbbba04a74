"""Count-based Markov next-node model.

Serves as an exactly-computable stand-in for the attention backbone in
tests and diagnostics: same inference interface, probabilities derived
from (optionally smoothed) conditional counts with backoff to lower
orders on unseen context.
"""

from __future__ import annotations

from collections import Counter, defaultdict

import numpy as np

from walkgen.models.base import new_counters


class MarkovModel:
    kind = "markov"

    def __init__(self, vocab, order, smoothing=0.0):
        if order not in (1, 2):
            raise ValueError(f"order must be 1 or 2, got {order}")
        if smoothing < 0:
            raise ValueError(f"smoothing must be >= 0, got {smoothing}")
        self.vocab = int(vocab)  # nodes + start token
        self.order = order
        self.smoothing = float(smoothing)
        self.unigram = Counter()
        self.total_tokens = 0
        self.tables = {1: defaultdict(Counter)}
        if order == 2:
            self.tables[2] = defaultdict(Counter)
        self.counters = new_counters()

    @property
    def start_token(self):
        return self.vocab - 1

    @property
    def n_nodes(self):
        return self.vocab - 1

    def reset_counters(self):
        self.counters = new_counters()

    def _count_walk(self, walk):
        padded = [self.start_token] * self.order + [int(v) for v in walk]
        for v in walk:
            self.unigram[int(v)] += 1
            self.total_tokens += 1
        for i in range(self.order, len(padded)):
            tgt = padded[i]
            self.tables[1][(padded[i - 1],)][tgt] += 1
            if self.order == 2:
                self.tables[2][(padded[i - 2], padded[i - 1])][tgt] += 1

    def _dist_from(self, counter):
        s = self.smoothing
        total = sum(counter.values())
        probs = np.zeros(self.vocab, dtype=np.float64)
        denom = total + s * self.n_nodes
        if s > 0:
            probs[: self.n_nodes] = s / denom
        for tgt, c in counter.items():
            probs[tgt] += c / denom
        return probs

    def _distribution(self, context):
        """Highest-order table whose context was observed; unigram last."""
        for order in range(self.order, 0, -1):
            ctx = tuple(context[-order:])
            counter = self.tables[order].get(ctx)
            if counter:
                return self._dist_from(counter)
        return self._dist_from(self.unigram)

    # -- inference interface shared with the attention backbone --

    def begin(self, prefixes):
        prefixes = np.asarray(prefixes, dtype=np.int64)
        if prefixes.ndim != 2 or prefixes.shape[1] < 1:
            raise ValueError("prefixes must be a non-empty (B, T) batch")
        self._validate(prefixes)
        contexts = [
            [self.start_token] * self.order + row.tolist() for row in prefixes
        ]
        probs = np.stack([self._distribution(ctx) for ctx in contexts])
        state = [ctx[-self.order :] for ctx in contexts]
        self.counters["prefix_sequences"] += prefixes.shape[0]
        self.counters["prefix_tokens"] += prefixes.size
        return probs, state

    def extend(self, state, tokens):
        tokens = np.asarray(tokens, dtype=np.int64)
        self._validate(tokens)
        new_state = [
            (ctx + [int(t)])[-self.order :] for ctx, t in zip(state, tokens)
        ]
        probs = np.stack([self._distribution(ctx) for ctx in new_state])
        self.counters["incremental_steps"] += len(tokens)
        return probs, new_state

    def next_distribution(self, prefix):
        prefix = list(prefix)
        if len(prefix) == 0:
            raise ValueError("empty prefix: condition on the start token explicitly")
        probs, _ = self.begin(np.array([prefix], dtype=np.int64))
        return probs[0]

    def walk_log_prob(self, walk):
        walk = list(int(v) for v in walk)
        if len(walk) < 2:
            raise ValueError("walk must have length >= 2")
        self._validate(np.array(walk))
        padded = [self.start_token] * self.order + walk
        total = 0.0
        for i in range(self.order, len(padded)):
            probs = self._distribution(padded[:i])
            p = probs[padded[i]]
            if p <= 0:
                return float("-inf")
            total += float(np.log(p))
        return total

    def _validate(self, arr):
        if arr.size and (arr.min() < 0 or arr.max() >= self.vocab):
            raise ValueError(f"token id out of vocab: valid range is [0, {self.vocab})")

    def table_arrays(self):
        """Flattened count tables for checkpointing; see checkpoint module."""
        out = {}
        for order, table in self.tables.items():
            ctxs = sorted(table.keys())
            offsets = [0]
            targets = []
            counts = []
            for ctx in ctxs:
                items = sorted(table[ctx].items())
                targets.extend(t for t, _ in items)
                counts.extend(c for _, c in items)
                offsets.append(len(targets))
            out[order] = {
                "contexts": np.array(ctxs, dtype=np.int64).reshape(len(ctxs), order),
                "offsets": np.array(offsets, dtype=np.int64),
                "targets": np.array(targets, dtype=np.int64),
                "counts": np.array(counts, dtype=np.int64),
            }
        uni = sorted(self.unigram.items())
        out["unigram"] = {
            "targets": np.array([t for t, _ in uni], dtype=np.int64),
            "counts": np.array([c for _, c in uni], dtype=np.int64),
        }
        return out

    @classmethod
    def from_table_arrays(cls, vocab, order, smoothing, arrays):
        model = cls(vocab, order, smoothing)
        for o in model.tables:
            data = arrays[o]
            ctxs = data["contexts"]
            offsets = data["offsets"]
            for i in range(len(ctxs)):
                ctx = tuple(int(x) for x in ctxs[i])
                lo, hi = int(offsets[i]), int(offsets[i + 1])
                model.tables[o][ctx] = Counter(
                    {int(t): int(c) for t, c in zip(data["targets"][lo:hi], data["counts"][lo:hi])}
                )
        model.unigram = Counter(
            {int(t): int(c) for t, c in zip(arrays["unigram"]["targets"], arrays["unigram"]["counts"])}
        )
        model.total_tokens = sum(model.unigram.values())
        return model


def fit_markov(corpus, order=1, smoothing=0.0):
    """Fit conditional count tables on a walk corpus.

    Walks are prefixed with the start token, so the first-node
    distribution is learned like any other transition.
    """
    walks = corpus.walks if hasattr(corpus, "walks") else np.asarray(corpus)
    if walks.size == 0:
        raise ValueError("corpus is empty")
    n = corpus.n if hasattr(corpus, "n") else int(walks.max()) + 1
    model = MarkovModel(vocab=n + 1, order=order, smoothing=smoothing)
    for row in walks:
        model._count_walk(row)
    return model
