"""Exploration measurement and the fast->slow handover.

A generated walk is "exploring" at position t when its window of the p
most recent nodes is absent from the filter of training windows, and
"exploiting" otherwise. The handover point is placed at the knee of the
slow model's exploration curve, or fixed by hand.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from walkgen.bloom import window_key
from walkgen.models.sampling import DEFAULT_BATCH, generate_schedule
from walkgen.walks import WalkMatrix


@dataclass
class ExplorationCurve:
    """Per-position exploration percentage; positions < window report 0."""

    ex: np.ndarray
    n_walks: int
    model_tag: str
    window: int

    def __post_init__(self):
        self.ex = np.asarray(self.ex, dtype=np.float64)


@dataclass(frozen=True)
class HandoverPoint:
    """Number of leading walk nodes produced by the fast model."""

    j: int
    method: str  # "knee" or "fixed"
    source: str = ""


def _start_nodes(n_nodes, n_walks, seed):
    # its own stream, disjoint from the per-walk streams keyed (seed, i)
    return np.random.default_rng([int(seed), 2**63]).integers(n_nodes, size=n_walks)


def exploration_curve(model, g, filt, n_walks, l, seed=0, temperature=1.0, batch_size=DEFAULT_BATCH, model_tag=""):
    """Sample n_walks walks of length l from the model and measure, per
    position t >= p, the percentage whose last-p-node window the filter
    has never seen."""
    p = filt.window_size
    if l < p:
        raise ValueError(f"walk length {l} shorter than window {p}")
    starts = _start_nodes(g.n, n_walks, seed)
    corpus = generate_schedule([(model, l - 1)], starts, l, seed=seed, temperature=temperature, batch_size=batch_size)
    ex = np.zeros(l, dtype=np.float64)
    walks32 = corpus.walks.astype("<u4")
    for t in range(p, l):
        exploring = 0
        for row in walks32:
            if not filt.maybe_contains(row[t - p + 1 : t + 1].tobytes()):
                exploring += 1
        ex[t] = 100.0 * exploring / n_walks
    return ExplorationCurve(ex=ex, n_walks=n_walks, model_tag=model_tag or model.kind, window=p)


def entropy_curve(model, n_walks, l, seed=0, batch_size=DEFAULT_BATCH):
    """Mean entropy (nats) of the model's next-node distribution per
    position. Diagnostic only; the handover decision uses exploration, not
    entropy. Position 0 reports 0 (the start node is given)."""
    sums = np.zeros(l, dtype=np.float64)

    def on_step(pos, probs, lo, hi):
        q = np.clip(probs, 1e-300, None)
        sums[pos] += -(probs * np.log(q)).sum()

    starts = _start_nodes(model.vocab - 1, n_walks, seed)
    generate_schedule([(model, l - 1)], starts, l, seed=seed, batch_size=batch_size, on_step=on_step)
    out = sums / n_walks
    out[0] = 0.0
    return out


def find_knee(curve, sensitivity=1.0):
    """Index of the curve's knee.

    Kneedle-style: min-max normalize y over uniformly spaced x, form the
    difference curve y_d = y_norm - x_norm, and return the first local
    maximum of y_d that is confirmed by the sensitivity threshold (y_d must
    dip below max - sensitivity * mean x-spacing before the next candidate).
    If no candidate is confirmed, fall back to the position of the largest
    single-step rise y[i] - y[i-1], smallest index on ties.
    """
    y = np.asarray(curve, dtype=np.float64)
    n = len(y)
    if n < 3:
        raise ValueError(f"curve too short for knee detection: {n} points")
    lo, hi = y.min(), y.max()
    if hi == lo:
        raise ValueError("no knee: curve is constant")
    y_norm = (y - lo) / (hi - lo)
    x_norm = np.arange(n, dtype=np.float64) / (n - 1)
    y_d = y_norm - x_norm

    candidates = [
        i for i in range(1, n - 1) if y_d[i] > y_d[i - 1] and y_d[i] >= y_d[i + 1]
    ]
    spacing = 1.0 / (n - 1)
    for ci, i in enumerate(candidates):
        threshold = y_d[i] - sensitivity * spacing
        stop = candidates[ci + 1] if ci + 1 < len(candidates) else n
        for j in range(i + 1, stop):
            if y_d[j] < threshold:
                return i
    rises = np.diff(y)
    return int(np.argmax(rises)) + 1


def handover_point(fast_curve, slow_curve, sensitivity=1.0, fixed=None):
    """Handover from the slow model's exploration knee, or a fixed override.

    The slow curve drives the decision: the handover must anticipate where
    the larger model starts exploring. Positions below the window size are
    excluded from the search.
    """
    if fixed is not None:
        return HandoverPoint(j=int(fixed), method="fixed")
    fast_ex = fast_curve.ex if isinstance(fast_curve, ExplorationCurve) else np.asarray(fast_curve)
    slow_ex = slow_curve.ex if isinstance(slow_curve, ExplorationCurve) else np.asarray(slow_curve)
    if len(fast_ex) != len(slow_ex):
        raise ValueError("fast and slow curves must have equal length")
    offset = slow_curve.window if isinstance(slow_curve, ExplorationCurve) else 0
    tag = slow_curve.model_tag if isinstance(slow_curve, ExplorationCurve) else "slow"
    j = find_knee(slow_ex[offset:], sensitivity=sensitivity) + offset
    return HandoverPoint(j=j, method="knee", source=tag)


def generate_fast_slow(fast, slow, handover, start_nodes, l, seed=0, temperature=1.0, batch_size=DEFAULT_BATCH):
    """Cascaded generation: the first j nodes under the fast model, the
    rest under the slow model.

    The slow model is primed with exactly one full forward pass over the
    j-node prefix per walk. Per-walk RNG streams make positions < j bitwise
    identical to fast-only generation with the same seed.
    """
    j = handover.j if isinstance(handover, HandoverPoint) else int(handover)
    if not 0 < j < l:
        raise ValueError(f"handover must satisfy 0 < j < l, got j={j}, l={l}")
    if fast.vocab != slow.vocab:
        raise ValueError(f"vocab mismatch: fast={fast.vocab}, slow={slow.vocab}")
    return generate_schedule(
        [(fast, j - 1), (slow, l - 1)],
        start_nodes,
        l,
        seed=seed,
        temperature=temperature,
        batch_size=batch_size,
    )


def save_curves_csv(path, fast_curve, slow_curve, fast_entropy=None, slow_entropy=None):
    """Step-indexed CSV of both exploration curves and optional entropies."""
    l = len(slow_curve.ex)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "ex_fast", "ex_slow", "entropy_fast", "entropy_slow"])
        for t in range(l):
            writer.writerow(
                [
                    t,
                    f"{fast_curve.ex[t]:.6f}",
                    f"{slow_curve.ex[t]:.6f}",
                    "" if fast_entropy is None else f"{fast_entropy[t]:.6f}",
                    "" if slow_entropy is None else f"{slow_entropy[t]:.6f}",
                ]
            )


def load_curves_csv(path):
    rows = {"step": [], "ex_fast": [], "ex_slow": [], "entropy_fast": [], "entropy_slow": []}
    with open(path, newline="") as fh:
        for record in csv.DictReader(fh):
            for key in rows:
                value = record.get(key, "")
                rows[key].append(float(value) if value not in ("", None) else float("nan"))
    return {k: np.array(v) for k, v in rows.items()}
