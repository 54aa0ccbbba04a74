"""Second-order (biased) random walk corpora.

The next node x after traversing t -> v is drawn from Adj(v) with weight
pi(x, t): 1/p if x == t, 1 if x neighbors t, 1/q otherwise. p = q = 1
reduces to a plain first-order walk.
"""

from __future__ import annotations

import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

_MAGIC = b"WLKM"
_VERSION = 1


@dataclass(frozen=True)
class SamplerParams:
    """Return parameter p and in-out parameter q (both positive)."""

    p: float = 1.0
    q: float = 1.0

    def __post_init__(self):
        if self.p <= 0 or self.q <= 0:
            raise ValueError(f"p and q must be positive, got p={self.p}, q={self.q}")


@dataclass
class WalkMatrix:
    """m walks of length k over node ids < n, stored row-major."""

    walks: np.ndarray  # (m, k) int64
    n: int

    def __post_init__(self):
        self.walks = np.asarray(self.walks, dtype=np.int64)
        if self.walks.ndim != 2:
            raise ValueError("walks must be a 2-D matrix")

    @property
    def m(self):
        return self.walks.shape[0]

    @property
    def k(self):
        return self.walks.shape[1]

    def save(self, path):
        """Binary format: magic, version u32, m u64, k u32, n u32, then m*k LE u32 ids."""
        if self.walks.size and (self.walks.min() < 0 or self.walks.max() >= 2**32):
            raise ValueError("node ids do not fit in u32")
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<IQII", _VERSION, self.m, self.k, self.n))
            fh.write(self.walks.astype("<u4").tobytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            magic = fh.read(4)
            if magic != _MAGIC:
                raise ValueError(f"{path}: bad magic {magic!r}")
            version, m, k, n = struct.unpack("<IQII", fh.read(20))
            if version != _VERSION:
                raise ValueError(f"{path}: unsupported version {version}")
            data = np.frombuffer(fh.read(m * k * 4), dtype="<u4")
            if data.size != m * k:
                raise ValueError(f"{path}: truncated walk data")
        return cls(data.reshape(m, k).astype(np.int64), n=n)

    def save_text(self, path):
        """One space-separated walk per line, for inspection."""
        with open(path, "w") as fh:
            for row in self.walks:
                fh.write(" ".join(str(int(v)) for v in row))
                fh.write("\n")


def step_distribution(g, t, v, params):
    """Exact next-node distribution over Adj(v) after traversing t -> v.

    Returns (neighbors array, probabilities array). Raises if (t, v) is
    not an edge.
    """
    if not g.has_edge(t, v):
        raise ValueError(f"({t},{v}) is not an edge; second-order step undefined")
    nbrs = g.adj[v]
    t_set = g.neighbor_sets[t]
    w = np.empty(len(nbrs), dtype=np.float64)
    inv_p = 1.0 / params.p
    inv_q = 1.0 / params.q
    for i, x in enumerate(nbrs):
        x = int(x)
        if x == t:
            w[i] = inv_p
        elif x in t_set:
            w[i] = 1.0
        else:
            w[i] = inv_q
    return nbrs, w / w.sum()


def second_order_step(g, t, v, params, rng):
    """Sample the next node after traversing t -> v."""
    nbrs, probs = step_distribution(g, t, v, params)
    u = rng.random()
    idx = int(np.searchsorted(np.cumsum(probs), u, side="right"))
    if idx >= len(nbrs):
        idx = len(nbrs) - 1
    return int(nbrs[idx])


def sample_walk(g, start, k, params, rng):
    """Length-k walk from ``start``: second node uniform over Adj(start),
    the rest via second-order steps."""
    if k < 2:
        raise ValueError(f"walk length must be >= 2, got {k}")
    nbrs = g.adj[start]
    if len(nbrs) == 0:
        raise ValueError(f"start node {start} has no neighbors")
    walk = np.empty(k, dtype=np.int64)
    walk[0] = start
    walk[1] = int(nbrs[int(rng.integers(len(nbrs)))])
    for i in range(2, k):
        walk[i] = second_order_step(g, int(walk[i - 2]), int(walk[i - 1]), params, rng)
    return walk


def walk_rng(seed, walk_index):
    """Independent per-walk RNG stream; depends only on (seed, walk_index)."""
    return np.random.default_rng([int(seed), int(walk_index)])


def _build_range(g, lo, hi, k, params, seed):
    out = np.empty((hi - lo, k), dtype=np.int64)
    for i in range(lo, hi):
        rng = walk_rng(seed, i)
        start = int(rng.integers(g.n))
        out[i - lo] = sample_walk(g, start, k, params, rng)
    return out


def build_corpus(g, m, k, params=None, seed=0, workers=1):
    """m independent walks of length k, each from a uniform random start node.

    Walk i is a pure function of (seed, i), so the corpus is identical for
    any worker count or schedule.
    """
    if m < 1:
        raise ValueError(f"walk count must be >= 1, got {m}")
    params = params or SamplerParams()
    if workers <= 1 or m < 2 * workers:
        walks = _build_range(g, 0, m, k, params, seed)
        return WalkMatrix(walks, n=g.n)

    bounds = np.linspace(0, m, workers + 1, dtype=int)
    chunks = [(int(lo), int(hi)) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_build_range, g, lo, hi, k, params, seed) for lo, hi in chunks]
        parts = [f.result() for f in futures]
    return WalkMatrix(np.vstack(parts), n=g.n)
