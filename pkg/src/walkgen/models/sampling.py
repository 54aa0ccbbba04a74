"""Walk generation from next-node models.

One engine serves single-model sampling and fast/slow cascades. Every walk
owns an independent RNG stream keyed by (seed, walk index), and position t
always consumes that stream's draw t-1, so the tokens a walk receives do
not depend on batching or on which model produces later positions.
"""

from __future__ import annotations

import numpy as np

from walkgen.walks import WalkMatrix, walk_rng

DEFAULT_BATCH = 512


def _draw(probs, us, start_token, temperature):
    """Inverse-CDF sample per row after excluding the start token."""
    q = np.array(probs, dtype=np.float64, copy=True)
    q[:, start_token] = 0.0
    totals = q.sum(axis=1, keepdims=True)
    dead = totals[:, 0] <= 0.0
    if dead.any():
        # all mass sat on the start token; fall back to uniform over nodes
        q[dead, :start_token] = 1.0
        totals = q.sum(axis=1, keepdims=True)
    q /= totals
    if temperature == 0.0:
        return q.argmax(axis=1)
    if temperature != 1.0:
        np.power(q, 1.0 / temperature, out=q)
        q /= q.sum(axis=1, keepdims=True)
    cum = np.cumsum(q, axis=1)
    idx = (cum < us[:, None]).sum(axis=1)
    # float shortfall in the last cumsum entry: clamp to the last live token
    last_live = q.shape[1] - 1 - np.argmax(q[:, ::-1] > 0, axis=1)
    return np.minimum(idx, last_live)


def generate_schedule(
    segments, start_nodes, l, seed=0, temperature=1.0, batch_size=DEFAULT_BATCH, on_step=None
):
    """Generate walks of length l; segments assign position ranges to models.

    segments: list of (model, last_pos) with strictly increasing last_pos,
    final last_pos == l-1. Model s produces positions in
    (prev_last, last_pos], position 0 being the given start node. Each
    takeover primes the incoming model with one full forward pass over the
    prefix generated so far. ``on_step(pos, probs, lo, hi)``, when given, sees
    the raw model distribution used for every sampled position.
    """
    if l < 2:
        raise ValueError(f"generation length must be >= 2, got {l}")
    if not segments or segments[-1][1] != l - 1:
        raise ValueError("segments must cover positions up to l-1")
    vocab = segments[0][0].vocab
    for model, _ in segments:
        if model.vocab != vocab:
            raise ValueError(f"models disagree on vocab: {model.vocab} != {vocab}")
    start_token = vocab - 1
    start_nodes = np.asarray(start_nodes, dtype=np.int64)
    if start_nodes.ndim != 1:
        raise ValueError("start_nodes must be a 1-D list of node ids")
    if start_nodes.size and (start_nodes.min() < 0 or start_nodes.max() >= start_token):
        raise ValueError("start nodes must be node ids (not the start token)")

    n_walks = len(start_nodes)
    walks = np.empty((n_walks, l), dtype=np.int64)
    walks[:, 0] = start_nodes

    for lo in range(0, n_walks, batch_size):
        hi = min(lo + batch_size, n_walks)
        u = np.stack([walk_rng(seed, i).random(l - 1) for i in range(lo, hi)])
        prev_last = 0
        for model, last in segments:
            first = prev_last + 1
            prev_last = last
            if first > last:
                continue
            prefix = np.concatenate(
                [np.full((hi - lo, 1), start_token, dtype=np.int64), walks[lo:hi, :first]],
                axis=1,
            )
            probs, state = model.begin(prefix)
            for pos in range(first, last + 1):
                if on_step is not None:
                    on_step(pos, probs, lo, hi)
                walks[lo:hi, pos] = _draw(probs, u[:, pos - 1], start_token, temperature)
                if pos < last:
                    probs, state = model.extend(state, walks[lo:hi, pos])
    return WalkMatrix(walks, n=start_token)


def sample_walks(model, start_nodes, l, temperature=1.0, seed=0, batch_size=DEFAULT_BATCH):
    """Walks of length l from a single model, walk i starting at start_nodes[i]."""
    return generate_schedule([(model, l - 1)], start_nodes, l, seed=seed, temperature=temperature, batch_size=batch_size)
