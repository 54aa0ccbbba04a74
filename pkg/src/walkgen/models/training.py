"""Training loop for the attention backbone."""

from __future__ import annotations

import math
import time

import numpy as np
import torch
import torch.nn.functional as F

from walkgen.models.base import TrainParams, TrainReport
from walkgen.models.transformer import TransformerModel


def train(corpus, config, hyper=None, dtype=torch.float32):
    """Fit a TransformerModel to a walk corpus by next-token cross-entropy.

    Every walk is prefixed with the start token; the loss averages over all
    k next-token predictions per walk. Deterministic for a fixed seed on a
    single worker. Raises if the loss stops being finite.
    """
    if hyper is None:
        hyper = TrainParams()
    elif isinstance(hyper, dict):
        hyper = TrainParams(**hyper)

    walks = corpus.walks if hasattr(corpus, "walks") else np.asarray(corpus)
    m, k = walks.shape
    if walks.max() >= config.vocab - 1:
        raise ValueError(
            f"corpus contains id {int(walks.max())} but vocab reserves "
            f"{config.vocab - 1} for the start token"
        )
    if config.context_len < k - 1:
        raise ValueError(
            f"context_len={config.context_len} cannot condition on walks of "
            f"length {k}; need at least {k - 1}"
        )

    t0 = time.perf_counter()
    model = TransformerModel(config, seed=hyper.seed, dtype=dtype)
    net = model.net
    net.train()

    targets = torch.from_numpy(np.ascontiguousarray(walks, dtype=np.int64))
    inputs = torch.empty_like(targets)
    inputs[:, 0] = config.start_token
    inputs[:, 1:] = targets[:, :-1]

    opt = torch.optim.Adam(net.parameters(), lr=hyper.lr)
    order_gen = torch.Generator().manual_seed(hyper.seed)
    step = 0
    trajectory = []
    for epoch in range(hyper.epochs):
        order = torch.randperm(m, generator=order_gen)
        epoch_loss = 0.0
        n_batches = 0
        for lo in range(0, m, hyper.batch):
            idx = order[lo : lo + hyper.batch]
            step += 1
            if hyper.warmup_steps > 0:
                scale = min(1.0, step / hyper.warmup_steps)
                for group in opt.param_groups:
                    group["lr"] = hyper.lr * scale
            logits, _ = net(inputs[idx])
            loss = F.cross_entropy(logits.reshape(-1, config.vocab), targets[idx].reshape(-1))
            if not math.isfinite(loss.item()):
                raise RuntimeError(
                    f"non-finite loss at epoch {epoch} step {step} "
                    f"(lr={opt.param_groups[0]['lr']:.3g}); reduce the learning rate"
                )
            opt.zero_grad()
            loss.backward()
            opt.step()
            epoch_loss += loss.item()
            n_batches += 1
        trajectory.append(epoch_loss / n_batches)

    net.eval()
    report = TrainReport(
        epochs=hyper.epochs,
        final_cross_entropy=trajectory[-1] if trajectory else float("nan"),
        wall_clock_seconds=time.perf_counter() - t0,
        parameter_count=model.parameter_count,
        loss_trajectory=trajectory,
    )
    return model, report
