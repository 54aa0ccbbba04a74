"""Decoder-only attention backbone for next-node prediction.

Pre-norm self-attention blocks with causal masking, learned positional
embeddings, and an output projection tied to the token embedding. Depth is
the capacity knob: the fast and slow instances of the pipeline are this
same network with different layer counts.
"""

from __future__ import annotations

import math

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from walkgen.models.base import ModelConfig, new_counters


class _CausalSelfAttention(nn.Module):
    def __init__(self, width, heads, dropout):
        super().__init__()
        self.heads = heads
        self.head_dim = width // heads
        self.qkv = nn.Linear(width, 3 * width)
        self.proj = nn.Linear(width, width)
        self.drop = nn.Dropout(dropout)

    def forward(self, x, cache=None):
        # x: (B, T, W); cache: (k, v) of shape (B, H, S, D) from past positions
        b, t, _ = x.shape
        q, k, v = self.qkv(x).chunk(3, dim=-1)

        def split(m):
            return m.view(b, t, self.heads, self.head_dim).transpose(1, 2)

        q, k, v = split(q), split(k), split(v)
        if cache is not None:
            k = torch.cat([cache[0], k], dim=2)
            v = torch.cat([cache[1], v], dim=2)
        past = k.shape[2] - t

        if t > 1 and past == 0 and self.drop.p == 0.0:
            # whole-prefix pass: fused kernel, queries attend causally
            y = F.scaled_dot_product_attention(q, k, v, is_causal=True)
        else:
            att = (q @ k.transpose(-2, -1)) / math.sqrt(self.head_dim)
            if t > 1:
                # query i may attend to keys 0..past+i
                mask = torch.ones(t, k.shape[2], dtype=torch.bool, device=x.device)
                mask = torch.triu(mask, diagonal=past + 1)
                att = att.masked_fill(mask, float("-inf"))
            att = F.softmax(att, dim=-1)
            att = self.drop(att)
            y = att @ v
        y = y.transpose(1, 2).contiguous().view(b, t, -1)
        return self.proj(y), (k, v)


class _Block(nn.Module):
    def __init__(self, width, heads, dropout):
        super().__init__()
        self.ln1 = nn.LayerNorm(width)
        self.attn = _CausalSelfAttention(width, heads, dropout)
        self.ln2 = nn.LayerNorm(width)
        self.mlp = nn.Sequential(
            nn.Linear(width, 4 * width),
            nn.GELU(),
            nn.Linear(4 * width, width),
            nn.Dropout(dropout),
        )

    def forward(self, x, cache=None):
        a, new_cache = self.attn(self.ln1(x), cache)
        x = x + a
        x = x + self.mlp(self.ln2(x))
        return x, new_cache


class _Backbone(nn.Module):
    def __init__(self, config):
        super().__init__()
        self.config = config
        self.tok_emb = nn.Embedding(config.vocab, config.width)
        self.pos_emb = nn.Embedding(config.context_len + 1, config.width)
        self.drop = nn.Dropout(config.dropout)
        self.blocks = nn.ModuleList(
            [_Block(config.width, config.heads, config.dropout) for _ in range(config.depth)]
        )
        self.ln_f = nn.LayerNorm(config.width)
        self.head = nn.Linear(config.width, config.vocab, bias=False)
        self.head.weight = self.tok_emb.weight
        self.apply(self._init)

    @staticmethod
    def _init(module):
        if isinstance(module, nn.Linear):
            nn.init.normal_(module.weight, mean=0.0, std=0.02)
            if module.bias is not None:
                nn.init.zeros_(module.bias)
        elif isinstance(module, nn.Embedding):
            nn.init.normal_(module.weight, mean=0.0, std=0.02)

    def forward(self, tokens, caches=None, pos_offset=0):
        b, t = tokens.shape
        max_pos = self.config.context_len + 1
        if pos_offset + t > max_pos:
            raise ValueError(
                f"sequence of {pos_offset + t} positions exceeds the model's "
                f"{max_pos} (context_len={self.config.context_len})"
            )
        pos = torch.arange(pos_offset, pos_offset + t, device=tokens.device)
        x = self.drop(self.tok_emb(tokens) + self.pos_emb(pos))
        new_caches = []
        for i, block in enumerate(self.blocks):
            x, c = block(x, caches[i] if caches is not None else None)
            new_caches.append(c)
        return self.head(self.ln_f(x)), new_caches


class _Session:
    """KV caches plus the number of positions consumed so far."""

    __slots__ = ("caches", "length")

    def __init__(self, caches, length):
        self.caches = caches
        self.length = length


class TransformerModel:
    """Next-node model over vocab = n nodes + 1 start token (id n)."""

    kind = "attention"

    def __init__(self, config, seed=0, dtype=torch.float32):
        self.config = config
        self.dtype = dtype
        torch.manual_seed(seed)
        self.net = _Backbone(config).to(dtype)
        self.net.eval()
        self.counters = new_counters()

    @property
    def vocab(self):
        return self.config.vocab

    @property
    def start_token(self):
        return self.config.start_token

    @property
    def parameter_count(self):
        return sum(p.numel() for p in self.net.parameters())

    def reset_counters(self):
        self.counters = new_counters()

    def _check_tokens(self, arr):
        arr = np.asarray(arr, dtype=np.int64)
        if arr.size and (arr.min() < 0 or arr.max() >= self.vocab):
            raise ValueError(f"token id out of vocab: valid range is [0, {self.vocab})")
        return arr

    def begin(self, prefixes):
        """Prime a batch of sequences with one full forward pass each.

        prefixes: (B, T) token ids, start token included by the caller.
        Returns (probs over vocab for the next position, session state).
        """
        tokens = torch.from_numpy(self._check_tokens(prefixes))
        if tokens.ndim != 2 or tokens.shape[1] < 1:
            raise ValueError("prefixes must be a non-empty (B, T) batch")
        with torch.no_grad():
            logits, caches = self.net(tokens)
            # softmax in float64 so the vector sums to 1 even at large vocab
            probs = F.softmax(logits[:, -1, :].double(), dim=-1)
        self.counters["prefix_sequences"] += tokens.shape[0]
        self.counters["prefix_tokens"] += tokens.numel()
        return probs.numpy(), _Session(caches, tokens.shape[1])

    def extend(self, session, tokens):
        """Advance every sequence by one token (incremental, cached)."""
        tokens = torch.from_numpy(self._check_tokens(tokens)).view(-1, 1)
        with torch.no_grad():
            logits, caches = self.net(tokens, caches=session.caches, pos_offset=session.length)
            probs = F.softmax(logits[:, -1, :].double(), dim=-1)
        self.counters["incremental_steps"] += tokens.shape[0]
        return probs.numpy(), _Session(caches, session.length + 1)

    def next_distribution(self, prefix):
        """Probability vector over vocab given a non-empty node prefix.

        The start token is prepended internally; its output mass is part of
        the returned vector but is excluded when sampling walks.
        """
        prefix = list(prefix)
        if len(prefix) == 0:
            raise ValueError("empty prefix: condition on the start token explicitly")
        if len(prefix) > self.config.context_len:
            raise ValueError(f"prefix longer than context_len={self.config.context_len}")
        tokens = np.array([[self.start_token] + prefix], dtype=np.int64)
        probs, _ = self.begin(tokens)
        return probs[0]

    def walk_log_prob(self, walk):
        """Sum of log next-token probabilities along the walk, the first
        node conditioned on the start token."""
        walk = self._check_tokens(walk)
        if walk.ndim != 1 or len(walk) < 2:
            raise ValueError("walk must be a 1-D sequence of length >= 2")
        inputs = np.concatenate([[self.start_token], walk[:-1]])
        tokens = torch.from_numpy(inputs).view(1, -1)
        with torch.no_grad():
            logits, _ = self.net(tokens)
            logp = F.log_softmax(logits[0].double(), dim=-1)
        targets = torch.from_numpy(walk)
        return float(logp[torch.arange(len(walk)), targets].sum().item())

    def to_double(self):
        self.net = self.net.double()
        self.dtype = torch.float64
        return self
