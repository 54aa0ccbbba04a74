"""Model checkpoints: JSON header line + raw little-endian f32 blobs.

The header declares kind, vocab, architecture, and the name/shape of every
blob in order; loading validates each shape against the header before
accepting the file.
"""

from __future__ import annotations

import json

import numpy as np
import torch

from walkgen.models.base import ModelConfig
from walkgen.models.markov import MarkovModel
from walkgen.models.transformer import TransformerModel

_FORMAT_VERSION = 1


def _blob_entries(model):
    if model.kind == "attention":
        for name, tensor in model.net.state_dict().items():
            yield name, tensor.detach().cpu().numpy()
    else:
        arrays = model.table_arrays()
        for order in sorted(k for k in arrays if k != "unigram"):
            for part in ("contexts", "offsets", "targets", "counts"):
                yield f"order{order}.{part}", arrays[order][part]
        for part in ("targets", "counts"):
            yield f"unigram.{part}", arrays["unigram"][part]


def save_model(model, path):
    entries = list(_blob_entries(model))
    header = {
        "format_version": _FORMAT_VERSION,
        "kind": model.kind,
        "vocab": model.vocab,
        "params": [{"name": n, "shape": list(a.shape)} for n, a in entries],
    }
    if model.kind == "attention":
        header["config"] = model.config.to_dict()
    else:
        header["order"] = model.order
        header["smoothing"] = model.smoothing
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode())
        fh.write(b"\n")
        for _, arr in entries:
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_model(path):
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode())
        if header["format_version"] != _FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint version {header['format_version']}")
        blobs = {}
        for entry in header["params"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(4 * count)
            if len(raw) != 4 * count:
                raise ValueError(f"truncated blob for {entry['name']}: expected shape {shape}")
            blobs[entry["name"]] = np.frombuffer(raw, dtype="<f4").reshape(shape)
        trailing = fh.read(1)
        if trailing:
            raise ValueError("trailing bytes after declared blobs")

    if header["kind"] == "attention":
        config = ModelConfig(**header["config"])
        model = TransformerModel(config)
        state = {}
        for name, tensor in model.net.state_dict().items():
            if name not in blobs:
                raise ValueError(f"checkpoint missing parameter {name}")
            if tuple(tensor.shape) != blobs[name].shape:
                raise ValueError(
                    f"shape mismatch for {name}: header {blobs[name].shape}, model {tuple(tensor.shape)}"
                )
            state[name] = torch.from_numpy(blobs[name].copy()).to(tensor.dtype)
        model.net.load_state_dict(state)
        model.net.eval()
        return model

    if header["kind"] == "markov":
        order = int(header["order"])
        arrays = {}
        for o in range(1, order + 1):
            arrays[o] = {
                part: blobs[f"order{o}.{part}"].astype(np.int64)
                for part in ("contexts", "offsets", "targets", "counts")
            }
            arrays[o]["contexts"] = arrays[o]["contexts"].reshape(-1, o)
        arrays["unigram"] = {
            part: blobs[f"unigram.{part}"].astype(np.int64) for part in ("targets", "counts")
        }
        return MarkovModel.from_table_arrays(header["vocab"], order, header["smoothing"], arrays)

    raise ValueError(f"unknown model kind {header['kind']!r}")
