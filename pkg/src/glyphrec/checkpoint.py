"""Checkpoint directory format.

`meta.json` records the model family, shapes, hyperparameters, and a config
echo.  Each named parameter lives in its own binary blob `<name>.bin`: a
little-endian uint64 rank, then one little-endian uint64 per dimension, then
the element data as little-endian 32-bit floats.
"""

from __future__ import annotations

import json
import os
import struct

import numpy as np
import torch

from .model import build_model

FORMAT_NAME = "glyphrec-checkpoint-v1"
META_NAME = "meta.json"


def write_tensor_blob(path: str, tensor: torch.Tensor) -> None:
    # np.ascontiguousarray would force 0-dim scalars up to 1-dim
    arr = np.asarray(tensor.detach().cpu().numpy(), dtype="<f4", order="C")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", arr.ndim))
        for dim in arr.shape:
            fh.write(struct.pack("<Q", dim))
        fh.write(arr.tobytes())


def read_tensor_blob(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        (rank,) = struct.unpack("<Q", fh.read(8))
        dims = struct.unpack(f"<{rank}Q", fh.read(8 * rank)) if rank else ()
        count = int(np.prod(dims)) if rank else 1
        data = np.frombuffer(fh.read(4 * count), dtype="<f4")
    if data.size != count:
        raise ValueError(f"{path}: truncated tensor blob")
    return data.reshape(dims).astype(np.float32)


def save_checkpoint(ckpt_dir: str, model, config_echo: dict | None = None) -> None:
    os.makedirs(ckpt_dir, exist_ok=True)
    named = model.named_tensors()
    meta = {
        "format": FORMAT_NAME,
        "decoder": model.kind,
        "num_symbols": model.num_symbols,
        "channels": model.encoder.channels,
        "hyperparameters": _model_hyperparameters(model),
        "config": config_echo or {},
        "tensors": {name: list(t.shape) for name, t in named.items()},
    }
    with open(os.path.join(ckpt_dir, META_NAME), "w") as fh:
        json.dump(meta, fh, indent=2)
    for name, tensor in named.items():
        write_tensor_blob(os.path.join(ckpt_dir, name + ".bin"), tensor)


def _model_hyperparameters(model) -> dict:
    hp = {}
    if model.kind == "nd":
        hp["fem_iters"] = model.iters
        if model.fem is not None:
            layer = model.fem.attn_layers[0]
            hp["fem_trans_layers"] = len(model.fem.attn_layers)
            hp["fem_conv_blocks"] = len(model.fem.conv_stack)
            hp["fem_heads"] = layer.heads
            hp["fem_window"] = layer.window
    elif model.kind == "pat":
        hp["pat_max_len"] = model.head.t_max
    return hp


def read_meta(ckpt_dir: str) -> dict:
    with open(os.path.join(ckpt_dir, META_NAME)) as fh:
        meta = json.load(fh)
    if meta.get("format") != FORMAT_NAME:
        raise ValueError(f"{ckpt_dir}: unknown checkpoint format {meta.get('format')!r}")
    return meta


def load_checkpoint(ckpt_dir: str):
    """Rebuild the model recorded in meta.json and load every tensor blob."""
    meta = read_meta(ckpt_dir)
    hp = meta.get("hyperparameters", {})
    model = build_model(
        meta["decoder"], meta["num_symbols"], channels=meta["channels"],
        fem_iters=hp.get("fem_iters", 1),
        fem_heads=hp.get("fem_heads", 8),
        fem_window=hp.get("fem_window", 11),
        fem_trans_layers=hp.get("fem_trans_layers", 1),
        fem_conv_blocks=hp.get("fem_conv_blocks", 1),
        pat_max_len=hp.get("pat_max_len", 12),
    )
    named = model.named_tensors()
    recorded = meta["tensors"]
    missing = set(recorded) ^ set(named)
    if missing:
        raise ValueError(f"{ckpt_dir}: tensor name mismatch: {sorted(missing)}")
    with torch.no_grad():
        for name, tensor in named.items():
            blob = read_tensor_blob(os.path.join(ckpt_dir, name + ".bin"))
            if list(blob.shape) != list(tensor.shape):
                raise ValueError(
                    f"{ckpt_dir}: {name} has shape {list(blob.shape)}, expected {list(tensor.shape)}")
            tensor.copy_(torch.from_numpy(blob).to(tensor.dtype))
    model.eval()
    return model, meta
