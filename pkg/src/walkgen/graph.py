"""Undirected simple graphs: edge-list I/O, LCC extraction, train/held-out splits."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class Graph:
    """Undirected simple graph over dense integer node ids 0..n-1.

    Immutable after construction; adjacency is precomputed so reads are
    cheap and safe to share across threads. ``original_ids[i]`` maps the
    compact id ``i`` back to the label it had in the source file.
    """

    def __init__(self, n, edges, community_labels=None, original_ids=None):
        self.n = int(n)
        edge_set = set()
        for u, v in edges:
            u, v = int(u), int(v)
            if u == v:
                raise ValueError(f"self-loop ({u},{u}) not allowed")
            if not (0 <= u < self.n and 0 <= v < self.n):
                raise ValueError(f"edge ({u},{v}) has endpoint >= n={self.n}")
            edge_set.add((u, v) if u < v else (v, u))
        self.edges = frozenset(edge_set)
        self.community_labels = dict(community_labels) if community_labels else None
        self.original_ids = list(original_ids) if original_ids is not None else list(range(self.n))

        adj = [[] for _ in range(self.n)]
        for u, v in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        self.adj = [np.array(sorted(a), dtype=np.int64) for a in adj]
        self.neighbor_sets = [frozenset(a.tolist()) for a in self.adj]

    @property
    def num_edges(self):
        return len(self.edges)

    def degree(self, v):
        return len(self.adj[v])

    def degrees(self):
        return np.array([len(a) for a in self.adj], dtype=np.int64)

    def has_edge(self, u, v):
        return v in self.neighbor_sets[u]

    def adjacency_matrix(self):
        """Sparse symmetric 0/1 adjacency (scipy CSR)."""
        import scipy.sparse as sp

        if not self.edges:
            return sp.csr_matrix((self.n, self.n), dtype=np.int64)
        rows, cols = [], []
        for u, v in self.edges:
            rows += [u, v]
            cols += [v, u]
        data = np.ones(len(rows), dtype=np.int64)
        return sp.csr_matrix((data, (rows, cols)), shape=(self.n, self.n))

    def connected_components(self):
        """List of components, each a sorted list of node ids."""
        seen = np.zeros(self.n, dtype=bool)
        comps = []
        for s in range(self.n):
            if seen[s]:
                continue
            stack = [s]
            seen[s] = True
            comp = []
            while stack:
                u = stack.pop()
                comp.append(u)
                for w in self.adj[u]:
                    w = int(w)
                    if not seen[w]:
                        seen[w] = True
                        stack.append(w)
            comps.append(sorted(comp))
        return comps

    def is_connected(self):
        if self.n == 0:
            return False
        return len(self.connected_components()) == 1

    def __eq__(self, other):
        return isinstance(other, Graph) and self.n == other.n and self.edges == other.edges

    def __repr__(self):
        return f"Graph(n={self.n}, edges={self.num_edges})"


@dataclass
class EdgeSplit:
    """Train graph plus held-out positive edges and sampled non-edges."""

    train_graph: Graph
    heldout_edges: list = field(default_factory=list)
    negative_edges: list = field(default_factory=list)
    seed: int = 0
    fraction: float = 0.0


def load_edge_list(path, report=None):
    """Read a whitespace-separated "u v" edge list into a Graph.

    Lines starting with '#' are comments. Node ids are compacted to
    0..n-1 in first-appearance order; self-loops and duplicate edges are
    dropped and counted in ``report`` (a dict) when one is passed.
    """
    path = Path(path)
    id_map = {}
    original = []
    edges = set()
    dropped_self = 0
    dropped_dup = 0
    n_lines = 0

    def compact(label):
        if label not in id_map:
            id_map[label] = len(original)
            original.append(label)
        return id_map[label]

    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            parts = stripped.split()
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'u v', got {stripped!r}")
            try:
                a, b = int(parts[0]), int(parts[1])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-integer node id in {stripped!r}") from None
            n_lines += 1
            if a == b:
                dropped_self += 1
                compact(a)
                continue
            u, v = compact(a), compact(b)
            key = (u, v) if u < v else (v, u)
            if key in edges:
                dropped_dup += 1
            else:
                edges.add(key)

    if n_lines == 0:
        raise ValueError(f"{path}: empty edge list")
    if report is not None:
        report["dropped_self_loops"] = dropped_self
        report["dropped_duplicates"] = dropped_dup
    return Graph(len(original), edges, original_ids=original)


def save_edge_list(g, path):
    """Write one "u v" line per edge (compact ids, u < v)."""
    with open(path, "w") as fh:
        for u, v in sorted(g.edges):
            fh.write(f"{u} {v}\n")


def save_id_map(g, path):
    """Sidecar mapping file: one "compact_id original_label" line per node."""
    with open(path, "w") as fh:
        for i, label in enumerate(g.original_ids):
            fh.write(f"{i} {label}\n")


def lcc(g):
    """Induced subgraph on the largest connected component, ids re-compacted.

    Size ties are broken by the component containing the smallest original
    node id. Re-compaction preserves ascending id order, so applying lcc to
    an already-connected graph is the identity.
    """
    if g.n == 0:
        raise ValueError("lcc of an empty graph")
    comps = g.connected_components()
    best = max(comps, key=lambda c: (len(c), -min(c)))
    keep = {v: i for i, v in enumerate(best)}
    edges = {(keep[u], keep[v]) for u, v in g.edges if u in keep and v in keep}
    labels = None
    if g.community_labels:
        labels = {keep[v]: g.community_labels[v] for v in best if v in g.community_labels}
    original = [g.original_ids[v] for v in best]
    return Graph(len(best), edges, community_labels=labels, original_ids=original)


def split_edges(g, holdout_fraction, seed):
    """Hold out a uniformly random edge fraction, keeping the train graph connected.

    Removal candidates are drawn in random order; a removal that would
    disconnect the train graph is reinserted and the next candidate tried.
    Negatives are non-edges sampled uniformly (no self-loops), one per
    held-out edge. Deterministic for a fixed seed.
    """
    if not 0 < holdout_fraction < 1:
        raise ValueError(f"holdout_fraction must be in (0,1), got {holdout_fraction}")
    if not g.is_connected():
        raise ValueError("split_edges requires a connected graph")

    m = g.num_edges
    target = int(round(holdout_fraction * m))
    max_removable = m - (g.n - 1)
    if target > max_removable:
        raise ValueError(
            f"cannot hold out {target} edges and stay connected; "
            f"at most {max_removable} edges are removable"
        )
    available_non_edges = g.n * (g.n - 1) // 2 - m
    if target > available_non_edges:
        raise ValueError(
            f"cannot sample {target} negative edges; the graph has only "
            f"{available_non_edges} non-edges"
        )

    rng = np.random.default_rng(seed)
    order = list(g.edges)
    order.sort()
    rng.shuffle(order)

    adj_sets = [set(s) for s in g.neighbor_sets]
    heldout = []
    for u, v in order:
        if len(heldout) == target:
            break
        adj_sets[u].discard(v)
        adj_sets[v].discard(u)
        # removal is kept only if u can still reach v through the rest
        if _reachable(adj_sets, u, v):
            heldout.append((u, v))
        else:
            adj_sets[u].add(v)
            adj_sets[v].add(u)
    if len(heldout) < target:
        raise ValueError(
            f"only {len(heldout)} of {target} requested edges were removable "
            "without disconnecting the train graph"
        )

    train_edges = g.edges - set(heldout)
    train = Graph(g.n, train_edges, community_labels=g.community_labels, original_ids=g.original_ids)

    edge_lookup = g.edges
    negatives = []
    neg_seen = set()
    while len(negatives) < target:
        u = int(rng.integers(g.n))
        v = int(rng.integers(g.n))
        if u == v:
            continue
        key = (u, v) if u < v else (v, u)
        if key in edge_lookup or key in neg_seen:
            continue
        neg_seen.add(key)
        negatives.append(key)

    return EdgeSplit(train, heldout, negatives, seed=seed, fraction=holdout_fraction)


def _reachable(adj_sets, u, v):
    """BFS reachability of u from v over the current adjacency sets."""
    if u == v:
        return True
    seen = {v}
    stack = [v]
    while stack:
        x = stack.pop()
        for y in adj_sets[x]:
            if y == u:
                return True
            if y not in seen:
                seen.add(y)
                stack.append(y)
    return False


def save_split(split, outdir):
    """Persist a split as train/heldout/negative edge lists plus a JSON manifest."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    save_edge_list(split.train_graph, outdir / "train.edges")
    for name, pairs in [("heldout.edges", split.heldout_edges), ("negative.edges", split.negative_edges)]:
        with open(outdir / name, "w") as fh:
            for u, v in pairs:
                fh.write(f"{u} {v}\n")
    manifest = {
        "seed": split.seed,
        "fraction": split.fraction,
        "counts": {
            "train_edges": split.train_graph.num_edges,
            "heldout_edges": len(split.heldout_edges),
            "negative_edges": len(split.negative_edges),
            "nodes": split.train_graph.n,
        },
    }
    with open(outdir / "split.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_split(outdir):
    outdir = Path(outdir)
    with open(outdir / "split.json") as fh:
        manifest = json.load(fh)
    n = manifest["counts"]["nodes"]

    def read_pairs(name):
        pairs = []
        with open(outdir / name) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                a, b = line.split()
                pairs.append((int(a), int(b)))
        return pairs

    train = Graph(n, read_pairs("train.edges"))
    return EdgeSplit(
        train,
        read_pairs("heldout.edges"),
        read_pairs("negative.edges"),
        seed=manifest["seed"],
        fraction=manifest["fraction"],
    )
