"""Scalable, bucketed bloom filter over walk neighborhoods.

A filter is an ordered list of fixed-size stages. Each stage holds h
buckets of m bits; hash function i addresses only bucket i, so a key sets
exactly one bit per bucket. When a stage reaches its capacity a new stage
is appended with geometrically larger capacity and a geometrically tighter
false-positive budget, keeping the compound rate of the whole filter at or
below the configured target. Absence answers are exact: a key that was
inserted is always reported maybe-present.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass

import numpy as np

_FORMAT_VERSION = 1


def capacity_for(bits, fp_rate):
    """Max keys a filter of the given size supports at the given FP rate.

    M * (ln 2)^2 / |ln P| rounded to the nearest integer — the standard
    capacity of a filter whose buckets are allowed to fill to 50%. Nearest
    rounding keeps the size<->capacity pair self-inverse: the M derived for
    a requested capacity maps back to that capacity.
    """
    if bits < 1:
        raise ValueError(f"bits must be >= 1, got {bits}")
    if not 0 < fp_rate < 1:
        raise ValueError(f"fp_rate must be in (0,1), got {fp_rate}")
    if fp_rate >= 0.99:
        raise ValueError("fp_rate >= 0.99 rejected: capacity diverges as the rate approaches 1")
    return int(round(bits * (math.log(2) ** 2) / abs(math.log(fp_rate))))


@dataclass(frozen=True)
class BloomParams:
    target_fp_rate: float = 0.01
    initial_capacity: int = 1_000_000
    growth_factor: int = 2
    tightening_ratio: float = 0.5

    def __post_init__(self):
        if not 0 < self.target_fp_rate < 1 or self.target_fp_rate >= 0.99:
            raise ValueError(f"target_fp_rate must be in (0, 0.99), got {self.target_fp_rate}")
        if self.initial_capacity < 1:
            raise ValueError("initial_capacity must be positive")
        if self.growth_factor < 2:
            raise ValueError("growth_factor must be >= 2")
        if not 0 < self.tightening_ratio < 1:
            raise ValueError(f"tightening_ratio must be in (0,1), got {self.tightening_ratio}")


class _Stage:
    """One fixed-size bucketed filter: h buckets of m bits each."""

    __slots__ = ("capacity", "fp_budget", "h", "bucket_bits", "seed", "bits", "fill")

    def __init__(self, capacity, fp_budget, seed, bits=None, fill=0):
        self.capacity = capacity
        self.fp_budget = fp_budget
        self.h = max(1, math.ceil(math.log2(1.0 / fp_budget)))
        total_bits = capacity * abs(math.log(fp_budget)) / (math.log(2) ** 2)
        self.bucket_bits = max(8, math.ceil(total_bits / self.h))
        self.seed = seed
        nbytes = (self.h * self.bucket_bits + 7) // 8
        if bits is None:
            self.bits = bytearray(nbytes)
        else:
            if len(bits) != nbytes:
                raise ValueError(f"stage bitmap has {len(bits)} bytes, expected {nbytes}")
            self.bits = bytearray(bits)
        self.fill = fill

    @property
    def total_bits(self):
        return self.h * self.bucket_bits

    def _base_hashes(self, key):
        # two 64-bit hashes from one keyed 128-bit digest (double hashing)
        d = hashlib.blake2b(key, digest_size=16, key=self.seed.to_bytes(8, "little")).digest()
        h1, h2 = struct.unpack("<QQ", d)
        return h1, h2

    def _indices(self, key):
        h1, h2 = self._base_hashes(key)
        m = self.bucket_bits
        step = h2 % m or 1
        base = h1 % m
        for i in range(self.h):
            yield i * m + (base + i * step) % m

    def insert(self, key):
        bits = self.bits
        for idx in self._indices(key):
            bits[idx >> 3] |= 1 << (idx & 7)
        self.fill += 1

    def contains(self, key):
        bits = self.bits
        for idx in self._indices(key):
            if not bits[idx >> 3] & (1 << (idx & 7)):
                return False
        return True

    @property
    def full(self):
        return self.fill >= self.capacity


class NeighborhoodFilter:
    """Scalable bloom filter keyed by byte strings (walk windows)."""

    def __init__(self, params=None, window_size=4, base_seed=0x5EED):
        self.params = params or BloomParams()
        self.window_size = int(window_size)
        self.base_seed = int(base_seed)
        self.total_inserted = 0
        # first-stage budget P*(1-r): the geometric series of stage budgets
        # then sums to exactly the target rate
        p0 = self.params.target_fp_rate * (1.0 - self.params.tightening_ratio)
        self.stages = [_Stage(self.params.initial_capacity, p0, self.base_seed)]

    def _grow(self):
        last = self.stages[-1]
        self.stages.append(
            _Stage(
                last.capacity * self.params.growth_factor,
                last.fp_budget * self.params.tightening_ratio,
                self.base_seed + len(self.stages),
            )
        )

    def insert(self, key):
        stage = self.stages[-1]
        if stage.full:
            self._grow()
            stage = self.stages[-1]
        stage.insert(key)
        self.total_inserted += 1

    def maybe_contains(self, key):
        for stage in self.stages:
            if stage.contains(key):
                return True
        return False

    @property
    def serialized_bytes(self):
        header = self._header()
        blob = json.dumps(header, sort_keys=True).encode() + b"\n"
        return len(blob) + sum(len(s.bits) for s in self.stages)

    def _header(self):
        return {
            "version": _FORMAT_VERSION,
            "target_fp_rate": self.params.target_fp_rate,
            "initial_capacity": self.params.initial_capacity,
            "growth_factor": self.params.growth_factor,
            "tightening_ratio": self.params.tightening_ratio,
            "window_size": self.window_size,
            "base_seed": self.base_seed,
            "total_inserted": self.total_inserted,
            "stages": [
                {
                    "capacity": s.capacity,
                    "fp_budget": s.fp_budget,
                    "bits": s.total_bits,
                    "hashes": s.h,
                    "seed": s.seed,
                    "fill": s.fill,
                }
                for s in self.stages
            ],
        }

    def save(self, path):
        """JSON header line followed by the raw stage bitmaps; round-trips bit-exactly."""
        with open(path, "wb") as fh:
            fh.write(json.dumps(self._header(), sort_keys=True).encode())
            fh.write(b"\n")
            for s in self.stages:
                fh.write(bytes(s.bits))

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            header = json.loads(fh.readline().decode())
            if header["version"] != _FORMAT_VERSION:
                raise ValueError(f"unsupported filter format version {header['version']}")
            params = BloomParams(
                target_fp_rate=header["target_fp_rate"],
                initial_capacity=header["initial_capacity"],
                growth_factor=header["growth_factor"],
                tightening_ratio=header["tightening_ratio"],
            )
            obj = cls.__new__(cls)
            obj.params = params
            obj.window_size = header["window_size"]
            obj.base_seed = header["base_seed"]
            obj.total_inserted = header["total_inserted"]
            obj.stages = []
            for desc in header["stages"]:
                nbytes = (desc["bits"] + 7) // 8
                raw = fh.read(nbytes)
                if len(raw) != nbytes:
                    raise ValueError("truncated stage bitmap")
                stage = _Stage(desc["capacity"], desc["fp_budget"], desc["seed"], bits=raw, fill=desc["fill"])
                if stage.total_bits != desc["bits"] or stage.h != desc["hashes"]:
                    raise ValueError("stage geometry mismatch between header and parameters")
                obj.stages.append(stage)
        return obj


def window_key(window):
    """Serialize a window of node ids as little-endian u32s (order-sensitive)."""
    return np.asarray(window, dtype="<u4").tobytes()


def build_neighborhood_filter(corpus, p, params=None):
    """Insert every p-node sliding window of every walk in the corpus.

    total_inserted counts insert calls (m * (k - p + 1)), not distinct keys.
    """
    if p < 1:
        raise ValueError(f"window size must be >= 1, got {p}")
    if p > corpus.k:
        raise ValueError(f"window size {p} exceeds walk length {corpus.k}")
    if params is None:
        params = BloomParams(initial_capacity=max(1, corpus.m * (corpus.k - p + 1)))
    filt = NeighborhoodFilter(params=params, window_size=p)
    rows = corpus.walks.astype("<u4")
    for row in rows:
        buf = row.tobytes()
        for j in range(corpus.k - p + 1):
            filt.insert(buf[4 * j : 4 * (j + p)])
    return filt
