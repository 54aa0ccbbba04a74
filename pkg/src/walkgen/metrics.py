"""Link-prediction and structural fidelity metrics."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import shortest_path
from scipy.stats import rankdata


def auc(pos_scores, neg_scores):
    """Probability that a random positive outranks a random negative,
    ties counting one half (Mann-Whitney)."""
    pos = np.asarray(pos_scores, dtype=np.float64)
    neg = np.asarray(neg_scores, dtype=np.float64)
    if len(pos) == 0 or len(neg) == 0:
        raise ValueError("auc needs non-empty positive and negative score lists")
    ranks = rankdata(np.concatenate([pos, neg]), method="average")
    u = ranks[: len(pos)].sum() - len(pos) * (len(pos) + 1) / 2.0
    return float(u / (len(pos) * len(neg)))


def average_precision(pos_scores, neg_scores):
    """Mean precision at each positive's rank, scores descending.

    Ties are resolved pessimistically: a negative with the same score ranks
    above the positive.
    """
    pos = np.asarray(pos_scores, dtype=np.float64)
    neg = np.asarray(neg_scores, dtype=np.float64)
    if len(pos) == 0 or len(neg) == 0:
        raise ValueError("average_precision needs non-empty score lists")
    labels = np.concatenate([np.ones(len(pos), dtype=int), np.zeros(len(neg), dtype=int)])
    scores = np.concatenate([pos, neg])
    # sort by descending score; at equal score, negatives (label 0) first
    order = np.lexsort((labels, -scores))
    hits = 0
    total = 0.0
    for rank, idx in enumerate(order, start=1):
        if labels[idx] == 1:
            hits += 1
            total += hits / rank
    return total / len(pos)


def pair_scores(scores, pairs):
    """Read scores[u, v] for each pair; absent entries score 0."""
    if not pairs:
        return np.array([], dtype=np.float64)
    rows = [u for u, _ in pairs]
    cols = [v for _, v in pairs]
    return np.asarray(scores[rows, cols]).ravel().astype(np.float64)


def link_prediction_eval(scores, split):
    """AUC and average precision of held-out edges against sampled non-edges.

    ``scores`` is the symmetrized score matrix from the assembler, so the
    result does not depend on edge orientation.
    """
    pos = pair_scores(scores, split.heldout_edges)
    neg = pair_scores(scores, split.negative_edges)
    return auc(pos, neg), average_precision(pos, neg)


def _triangles_per_node(adj):
    common = (adj @ adj).multiply(adj)
    return np.asarray(common.sum(axis=1)).ravel() / 2.0


def assortativity(g):
    """Pearson correlation of endpoint degrees over both edge orientations.

    None when either side has zero variance (e.g. regular graphs).
    """
    if g.num_edges == 0:
        return None
    deg = g.degrees()
    us, vs = [], []
    for u, v in g.edges:
        us += [u, v]
        vs += [v, u]
    x = deg[us].astype(np.float64)
    y = deg[vs].astype(np.float64)
    if x.std() == 0 or y.std() == 0:
        return None
    return float(np.corrcoef(x, y)[0, 1])


def triangle_count(g):
    """Exact global triangle count."""
    if g.num_edges == 0:
        return 0
    adj = g.adjacency_matrix()
    return int(round(_triangles_per_node(adj).sum() / 3.0))


def clustering_coefficient(g):
    """Mean local clustering: edges among neighbors over deg*(deg-1)/2,
    zero for degree < 2."""
    if g.n == 0:
        return 0.0
    deg = g.degrees().astype(np.float64)
    tri = _triangles_per_node(g.adjacency_matrix()) if g.num_edges else np.zeros(g.n)
    local = np.zeros(g.n)
    mask = deg >= 2
    local[mask] = 2.0 * tri[mask] / (deg[mask] * (deg[mask] - 1.0))
    return float(local.mean())


def power_law_exponent(g, d_min=1):
    """Continuous maximum-likelihood exponent of the degree distribution:
    alpha = 1 + n_d / sum(ln(d_i / d_min)) over degrees >= d_min."""
    deg = g.degrees()
    deg = deg[deg >= d_min]
    if len(deg) == 0:
        return float("nan")
    denom = np.log(deg / float(d_min)).sum()
    if denom <= 0:
        return float("inf")
    return float(1.0 + len(deg) / denom)


def characteristic_path_length(g):
    """Mean shortest-path length over all pairs of the largest component."""
    from walkgen.graph import lcc

    component = g if g.is_connected() else lcc(g)
    if component.n < 2:
        return 0.0
    dist = shortest_path(component.adjacency_matrix(), method="D", unweighted=True)
    mask = ~np.eye(component.n, dtype=bool)
    return float(dist[mask].mean())


def community_densities(g, labels):
    """(intra, inter): edges within/across communities over possible pairs."""
    lab = np.array([labels[v] for v in range(g.n)])
    within_edges = sum(1 for u, v in g.edges if lab[u] == lab[v])
    cross_edges = g.num_edges - within_edges
    sizes = np.bincount(lab.astype(int))
    within_pairs = int((sizes * (sizes - 1) // 2).sum())
    total_pairs = g.n * (g.n - 1) // 2
    cross_pairs = total_pairs - within_pairs
    intra = within_edges / within_pairs if within_pairs else float("nan")
    inter = cross_edges / cross_pairs if cross_pairs else float("nan")
    return intra, inter


def structural_report(g, communities=None):
    """Structural metric dict for a graph; community densities only when
    labels are supplied."""
    if g.n == 0:
        raise ValueError("structural_report on an empty graph")
    report = {
        "max_degree": int(g.degrees().max()) if g.n else 0,
        "assortativity": assortativity(g),
        "triangle_count": triangle_count(g),
        "power_law_exponent": power_law_exponent(g),
        "clustering_coefficient": clustering_coefficient(g),
        "characteristic_path_length": characteristic_path_length(g),
    }
    labels = communities if communities is not None else g.community_labels
    if labels:
        intra, inter = community_densities(g, labels)
        report["intra_community_density"] = intra
        report["inter_community_density"] = inter
    return report


@dataclass
class EvalReport:
    """Link-prediction scores, generation time, and structural metrics."""

    auc: float
    average_precision: float
    wall_clock_generation_seconds: float
    structural: dict = field(default_factory=dict)
    tag: str = ""

    def to_dict(self):
        return {
            "tag": self.tag,
            "auc": self.auc,
            "average_precision": self.average_precision,
            "wall_clock_generation_seconds": self.wall_clock_generation_seconds,
            "structural": dict(self.structural),
        }

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    CSV_FIELDS = [
        "tag",
        "auc",
        "average_precision",
        "wall_clock_generation_seconds",
        "max_degree",
        "assortativity",
        "triangle_count",
        "power_law_exponent",
        "clustering_coefficient",
        "characteristic_path_length",
        "intra_community_density",
        "inter_community_density",
    ]

    def csv_row(self):
        flat = {
            "tag": self.tag,
            "auc": self.auc,
            "average_precision": self.average_precision,
            "wall_clock_generation_seconds": self.wall_clock_generation_seconds,
            **self.structural,
        }
        row = []
        for name in self.CSV_FIELDS:
            value = flat.get(name)
            if value is None:
                row.append("")
            elif isinstance(value, float):
                row.append(f"{value:.6f}" if math.isfinite(value) else "")
            else:
                row.append(str(value))
        return row
