"""Reassembling a graph from generated walks via consecutive-pair counts."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


@dataclass
class CountMatrix:
    """Symmetric co-occurrence counts of consecutive walk pairs.

    total_pairs counts retained (a != b) consecutive occurrences; each one
    increments both orientations, so the weighted upper triangle sums to
    total_pairs. Self-pairs are dropped and tallied separately.
    """

    matrix: sp.csr_matrix
    total_pairs: int
    dropped_self_pairs: int

    @property
    def n(self):
        return self.matrix.shape[0]


def count_matrix(walks, n=None):
    """Tally consecutive pairs of every walk into a symmetric sparse matrix."""
    arr = walks.walks if hasattr(walks, "walks") else np.asarray(walks)
    if n is None:
        n = walks.n if hasattr(walks, "n") else (int(arr.max()) + 1 if arr.size else 0)
    a = arr[:, :-1].ravel()
    b = arr[:, 1:].ravel()
    keep = a != b
    dropped = int((~keep).sum())
    a, b = a[keep], b[keep]
    data = np.ones(2 * len(a), dtype=np.int64)
    mat = sp.coo_matrix(
        (data, (np.concatenate([a, b]), np.concatenate([b, a]))), shape=(n, n)
    ).tocsr()
    mat.sum_duplicates()
    return CountMatrix(matrix=mat, total_pairs=int(len(a)), dropped_self_pairs=dropped)


def edge_scores(counts):
    """Row-normalized scores p_ij = S_ij / sum_v S_iv; zero rows stay zero."""
    S = counts.matrix if isinstance(counts, CountMatrix) else counts
    S = S.tocsr().astype(np.float64)
    row_sums = np.asarray(S.sum(axis=1)).ravel()
    inv = np.zeros_like(row_sums)
    nz = row_sums > 0
    inv[nz] = 1.0 / row_sums[nz]
    return sp.diags(inv) @ S


def symmetrized_scores(p):
    """Orientation-free ranking score max(p_ij, p_ji)."""
    return p.maximum(p.T).tocsr()


def assemble_graph(counts, mode="top_e", target_edges=None, seed=0):
    """Build a graph from the count matrix.

    bernoulli: include pair (i, j) independently with probability
    max(p_ij, p_ji). top_e: include the target_edges best pairs, ranked by
    symmetrized score, ties broken by higher raw count then smaller (i, j).
    """
    from walkgen.graph import Graph

    if isinstance(counts, CountMatrix):
        S = counts.matrix
        n = counts.n
    else:
        S = counts.tocsr()
        n = S.shape[0]
    scores = symmetrized_scores(edge_scores(S))
    upper = sp.triu(scores, k=1).tocoo()
    raw_upper = np.asarray(S[upper.row, upper.col]).ravel() if upper.nnz else np.array([])

    if mode == "bernoulli":
        rng = np.random.default_rng(seed)
        include = rng.random(upper.nnz) < upper.data
        edges = set(zip(upper.row[include].tolist(), upper.col[include].tolist()))
        return Graph(n, edges)

    if mode == "top_e":
        if target_edges is None:
            raise ValueError("top_e mode needs target_edges")
        if target_edges > upper.nnz:
            raise ValueError(
                f"cannot pick {target_edges} edges: only {upper.nnz} scored pairs exist"
            )
        order = np.lexsort((upper.col, upper.row, -raw_upper, -upper.data))
        chosen = order[:target_edges]
        edges = set(zip(upper.row[chosen].tolist(), upper.col[chosen].tolist()))
        return Graph(n, edges)

    raise ValueError(f"unknown assembly mode {mode!r}")


def save_triplets(matrix, path, fmt="{v:d}"):
    """Write "i j value" upper-triangle triplets of a symmetric sparse matrix."""
    coo = sp.triu(matrix, k=1).tocoo()
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w") as fh:
        for idx in order:
            value = coo.data[idx]
            fh.write(f"{coo.row[idx]} {coo.col[idx]} " + fmt.format(v=value) + "\n")
