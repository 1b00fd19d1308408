"""Single-process training loop: decoupled weight decay, linear warmup into
cosine decay, per-step loss logging, and a named-tensor checkpoint at the end.
Runs are deterministic for a fixed seed."""

from __future__ import annotations

import math
import os

import numpy as np
import torch

from . import baselines, losses
from .checkpoint import save_checkpoint
from .config import TrainConfig, config_echo
from .data import collate, load_corpus, make_targets
from .model import build_model

LOSS_CSV = "loss.csv"


def lr_at(step: int, total_steps: int, cfg: TrainConfig) -> float:
    """Linear warmup to the peak, then cosine decay to the floor."""
    if step < cfg.warmup_steps:
        return cfg.lr_peak * (step + 1) / cfg.warmup_steps
    span = max(1, total_steps - cfg.warmup_steps)
    t = min(1.0, (step - cfg.warmup_steps) / span)
    return cfg.lr_floor + 0.5 * (cfg.lr_peak - cfg.lr_floor) * (1.0 + math.cos(math.pi * t))


def _batch_loss(model, cfg: TrainConfig, images, widths, labels, eos_id):
    """Forward one batch; returns (loss tensor, rec, eos, ent floats)."""
    if cfg.decoder == "nd":
        targets, lengths = make_targets(labels, eos_id)
        results = model(images, widths, "train", target_lengths=lengths - 1)
        loss, breakdown = losses.total_loss(results, targets, lengths)
        return loss, breakdown.rec, breakdown.eos, breakdown.ent

    if cfg.decoder == "ctc":
        col_logits, valid_cols = model(images, widths)
        logp = torch.log_softmax(col_logits, dim=-1)
        n_max = max(len(l) for l in labels)
        padded = torch.zeros(len(labels), n_max, dtype=torch.long)
        for b, lbl in enumerate(labels):
            padded[b, :len(lbl)] = torch.tensor(lbl, dtype=torch.long)
        tlens = torch.tensor([len(l) for l in labels], dtype=torch.long)
        per_sample = baselines.ctc_forward_losses(logp, padded, valid_cols, tlens)
        finite = torch.isfinite(per_sample)
        if not bool(finite.any()):
            raise ValueError("every sample in the batch is CTC-infeasible")
        loss = per_sample[finite].mean()
        return loss, float(loss.detach()), 0.0, 0.0

    if cfg.decoder == "pat":
        t_max = model.head.t_max
        too_long = [len(l) for l in labels if len(l) > t_max]
        if too_long:
            raise ValueError(f"label length {max(too_long)} exceeds pat_max_len {t_max}")
        _, logits = model(images, widths)
        eos_class = model.head.eos_class
        targets = torch.full((len(labels), t_max), eos_class, dtype=torch.long)
        for b, lbl in enumerate(labels):
            targets[b, :len(lbl)] = torch.tensor(lbl, dtype=torch.long)
        loss = torch.nn.functional.cross_entropy(
            logits.reshape(-1, logits.shape[-1]), targets.reshape(-1))
        return loss, float(loss.detach()), 0.0, 0.0

    raise ValueError(f"unknown decoder kind {cfg.decoder!r}")


def train(cfg: TrainConfig) -> str:
    """Train per the config; returns the checkpoint directory (cfg.out)."""
    data = load_corpus(cfg.corpus)
    steps_per_epoch = math.ceil(len(data) / cfg.batch_size)
    total_steps = cfg.epochs * steps_per_epoch
    cfg.validate(total_steps)

    torch.manual_seed(cfg.seed)
    model = build_model(
        cfg.decoder, data.alphabet.n_symbols, channels=cfg.channels,
        fem_iters=cfg.fem_iters, fem_heads=cfg.fem_heads, fem_window=cfg.fem_window,
        fem_trans_layers=cfg.fem_trans_layers, fem_conv_blocks=cfg.fem_conv_blocks,
        pat_max_len=cfg.pat_max_len)
    model.train()
    opt = torch.optim.AdamW(model.parameters(), lr=cfg.lr_peak,
                            weight_decay=cfg.weight_decay)

    os.makedirs(cfg.out, exist_ok=True)
    order_rng = np.random.default_rng(cfg.seed)
    eos_id = data.alphabet.eos_id
    step = 0
    with open(os.path.join(cfg.out, LOSS_CSV), "w") as csv:
        csv.write("step,rec,eos,ent,total\n")
        for _epoch in range(cfg.epochs):
            order = order_rng.permutation(len(data))
            for start in range(0, len(order), cfg.batch_size):
                idxs = order[start:start + cfg.batch_size]
                images, widths, labels = collate(
                    data, idxs, preprocess=cfg.preprocess,
                    resize_width=cfg.resize_width, max_batch_width=cfg.max_batch_width)
                lr = lr_at(step, total_steps, cfg)
                for group in opt.param_groups:
                    group["lr"] = lr
                loss, rec, eos, ent = _batch_loss(model, cfg, images, widths, labels, eos_id)
                opt.zero_grad()
                loss.backward()
                opt.step()
                csv.write(f"{step},{rec:.6f},{eos:.6f},{ent:.6f},{float(loss.detach()):.6f}\n")
                step += 1

    model.eval()
    save_checkpoint(cfg.out, model, config_echo(cfg))
    return cfg.out
