"""Built-in graph sources: SBM sampler and the CORA-ML citation graph."""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from walkgen.graph import Graph, lcc

CORA_ML_URLS = [
    "https://raw.githubusercontent.com/danielzuegner/netgan/master/data/cora_ml.npz",
    "https://github.com/abojchevski/graph2gauss/raw/master/data/cora_ml.npz",
]


def sample_sbm(sizes, p_in, p_out, seed=0):
    """Stochastic block model over len(sizes) communities.

    Returns the raw sampled graph with community labels; pass it through
    lcc() before walking if full connectivity is needed.
    """
    sizes = list(sizes)
    n = sum(sizes)
    labels = np.repeat(np.arange(len(sizes)), sizes)
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(n, k=1)
    prob = np.where(labels[iu] == labels[ju], p_in, p_out)
    keep = rng.random(len(iu)) < prob
    edges = set(zip(iu[keep].tolist(), ju[keep].tolist()))
    return Graph(n, edges, community_labels={i: int(labels[i]) for i in range(n)})


def _graph_from_npz(path):
    import scipy.sparse as sp

    with np.load(path, allow_pickle=True) as loader:
        data = dict(loader)
        if "arr_0" in data:
            data = data["arr_0"].item()
        adj = sp.csr_matrix(
            (data["adj_data"], data["adj_indices"], data["adj_indptr"]),
            shape=tuple(data["adj_shape"]),
        )
    adj = adj + adj.T
    adj.setdiag(0)
    adj.eliminate_zeros()
    coo = sp.triu(adj, k=1).tocoo()
    edges = set(zip(coo.row.tolist(), coo.col.tolist()))
    return Graph(adj.shape[0], edges)


def load_cora_ml(path=None, download=True):
    """CORA-ML as an undirected Graph (caller applies lcc()).

    Resolution order: explicit path, $WALKGEN_CORA_ML, ./data/cora_ml.npz,
    then a download attempt. Raises FileNotFoundError when unavailable.
    """
    candidates = []
    if path:
        candidates.append(Path(path))
    if os.environ.get("WALKGEN_CORA_ML"):
        candidates.append(Path(os.environ["WALKGEN_CORA_ML"]))
    candidates.append(Path("data/cora_ml.npz"))
    for cand in candidates:
        if cand.is_file():
            return _graph_from_npz(cand)

    if download:
        dest = Path("data/cora_ml.npz")
        dest.parent.mkdir(parents=True, exist_ok=True)
        import urllib.request

        for url in CORA_ML_URLS:
            try:
                with urllib.request.urlopen(url, timeout=30) as resp:
                    dest.write_bytes(resp.read())
                return _graph_from_npz(dest)
            except Exception:
                continue
    raise FileNotFoundError(
        "cora_ml.npz not found; place it at data/cora_ml.npz or set WALKGEN_CORA_ML"
    )


def cora_ml_lcc(path=None, download=True):
    return lcc(load_cora_ml(path=path, download=download))
