"""Neighbor decoding: translate a feature map into a symbol string of
arbitrary length.

The decoder flattens the feature map, appends a learnable end-of-sequence
embedding, and builds a row-stochastic next-neighbor matrix N via a bilinear
layer.  Character attention maps unroll like a linked list, A_j = A_{j-1} N,
starting from a global-feature query.  Decoding stops when the end-of-sequence
column of the current map exceeds a threshold.  At inference each map can be
sharpened before the next step to curb error accumulation on long strings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn

from .encoder import FeatureMap, column_mask


@dataclass
class SharpenConfig:
    """Inference-time attention sharpening and stopping-rule knobs."""

    enabled: bool = True
    lam: float = 2.0        # per-step sharpening ramp
    mu: float = 16.0        # sharpening cap
    eps: float = 0.6        # end-of-sequence mass threshold
    max_steps: int | None = None  # None: 4 * feature width per sample

    def __post_init__(self):
        if not 0.0 < self.eps < 1.0:
            raise ValueError("eps must be in (0, 1)")
        if self.lam < 0.0:
            raise ValueError("lam must be >= 0")
        if self.mu < 1.0:
            raise ValueError("mu must be >= 1")


def masked_softmax(logits: torch.Tensor, mask: torch.Tensor, dim: int = -1) -> torch.Tensor:
    """Softmax over unmasked entries; masked entries come out exactly 0."""
    filled = logits.masked_fill(~mask, float("-inf"))
    return torch.softmax(filled, dim=dim)


def build_sequence(fmap: FeatureMap, e_eos: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Flatten the feature map and append the EOS embedding row.

    Returns (H, mask) with H of shape (B, S, c), S = h*w + 1; the mask is
    False at padded feature positions and always True at the EOS row.
    """
    values = fmap.values
    b, c, h, w = values.shape
    rows = values.permute(0, 2, 3, 1).reshape(b, h * w, c)
    eos = e_eos.to(values.dtype).expand(b, 1, c)
    hseq = torch.cat([rows, eos], dim=1)
    mask = column_mask(fmap.valid_cols, h * w)
    mask = torch.cat([mask, torch.ones(b, 1, dtype=torch.bool, device=mask.device)], dim=1)
    return hseq, mask


def neighbor_matrix(hseq: torch.Tensor, mask: torch.Tensor,
                    w_q: torch.Tensor, w_k: torch.Tensor,
                    w_r: torch.Tensor, b_r: torch.Tensor) -> torch.Tensor:
    """Row-stochastic next-neighbor matrix from a bilinear layer.

    N = softmax((H W_q) W_r (H W_k)^T / sqrt(c) + b_r), softmax taken row-wise
    over unmasked columns; masked columns are exactly 0.
    """
    c = hseq.shape[-1]
    q = hseq @ w_q
    k = hseq @ w_k
    logits = (q @ w_r) @ k.transpose(-2, -1) / math.sqrt(c) + b_r
    return masked_softmax(logits, mask.unsqueeze(-2))


def first_attention(fmap: FeatureMap, hseq: torch.Tensor, mask: torch.Tensor,
                    w_q: torch.Tensor, w_k: torch.Tensor) -> torch.Tensor:
    """Attention row of the first character, queried by the pooled feature map.

    Global average pooling runs over valid feature columns only; the EOS row
    and padded columns contribute nothing to the query.
    """
    values = fmap.values
    b, c, h, w = values.shape
    cols = column_mask(fmap.valid_cols, w).to(values.dtype)
    pooled = (values * cols[:, None, None, :]).sum(dim=(2, 3)) / (
        h * fmap.valid_cols.to(values.dtype)).unsqueeze(1)
    q0 = pooled @ w_q
    logits = (q0.unsqueeze(1) @ (hseq @ w_k).transpose(-2, -1)).squeeze(1) / math.sqrt(c)
    return masked_softmax(logits, mask)


def sharpen(row: torch.Tensor, alpha: float) -> torch.Tensor:
    """Renormalize a probability row through x -> exp(alpha x) - 1.

    Keeps the argmax, leaves one-hot rows fixed, and tends to the identity as
    alpha -> 0.  Masked entries (exact zeros) stay exactly zero, so the
    normalizer counts unmasked entries only.
    """
    if alpha <= 0:
        raise ValueError("alpha must be > 0")
    num = torch.expm1(alpha * row)
    return num / num.sum(dim=-1, keepdim=True)


def alpha_schedule(j: int, cfg: SharpenConfig) -> float:
    """Sharpening strength at recurrence step j >= 1, ramped and capped."""
    if j < 1:
        raise ValueError("step index must be >= 1")
    return min(1.0 + cfg.lam * (j - 1), cfg.mu)


def step(a_prev: torch.Tensor, nmat: torch.Tensor,
         cfg: SharpenConfig | None = None, j: int | None = None) -> torch.Tensor:
    """One rollout step: optionally sharpen the previous map, then apply N."""
    if cfg is not None and cfg.enabled:
        a_prev = sharpen(a_prev, alpha_schedule(j, cfg))
    if a_prev.ndim == nmat.ndim - 1:
        return (a_prev.unsqueeze(-2) @ nmat).squeeze(-2)
    return a_prev @ nmat


def rollout_train(a0: torch.Tensor, nmat: torch.Tensor, rows_total: int) -> torch.Tensor:
    """Stack A_0 and rows_total - 1 plain recurrence steps; no sharpening,
    no stopping test.  a0: (B, S); returns (B, rows_total, S)."""
    rows = [a0]
    a = a0
    for _ in range(rows_total - 1):
        a = step(a, nmat)
        rows.append(a)
    return torch.stack(rows, dim=1)


def rollout_infer(a0: torch.Tensor, nmat: torch.Tensor, cfg: SharpenConfig,
                  caps: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Unroll with the stopping rule; the EOS column is tested from A_0 on.

    caps: (B,) per-sample recurrence budget.  Returns (maps (B, R, S),
    lengths, terminated); rows past a sample's length are padding.
    """
    b = a0.shape[0]
    lengths = torch.zeros(b, dtype=torch.long, device=a0.device)
    crossed = a0[:, -1] > cfg.eps
    lengths[crossed] = 1
    active = ~crossed
    rows = [a0]
    j = 0
    while bool((active & (caps > j)).any()):
        j += 1
        a = step(rows[-1], nmat, cfg, j)
        rows.append(a)
        now = active & (a[:, -1] > cfg.eps) & (caps >= j)
        lengths[now] = j + 1
        active &= ~now
    terminated = lengths > 0
    lengths = torch.where(terminated, lengths, caps + 1)
    return torch.stack(rows, dim=1), lengths, terminated


@dataclass
class DecodeResult:
    """Per-sample attention rollout with aligned features and class logits.

    maps[b, :lengths[b]] are the rollout rows (lengths[b]-1 character maps
    plus one EOS map); rows past lengths[b] are padding and must be ignored.
    """

    maps: torch.Tensor           # (B, R, S)
    lengths: torch.Tensor        # (B,) long, rollout rows per sample
    terminated: torch.Tensor     # (B,) bool, False if the EOS test never fired
    char_features: torch.Tensor  # (B, R, c)
    logits: torch.Tensor         # (B, R, num_classes)
    hseq: torch.Tensor           # (B, S, c)
    seq_mask: torch.Tensor       # (B, S) bool

    def prediction(self, b: int) -> list[int]:
        n_chars = int(self.lengths[b]) - 1
        if n_chars <= 0:
            return []
        return self.logits[b, :n_chars].argmax(dim=-1).tolist()

    def predictions(self) -> list[list[int]]:
        return [self.prediction(b) for b in range(self.maps.shape[0])]

    def row_mask(self) -> torch.Tensor:
        idx = torch.arange(self.maps.shape[1], device=self.maps.device)
        return idx.unsqueeze(0) < self.lengths.unsqueeze(1)


class NeighborDecoder(nn.Module):
    """Parameter bundle plus the train/infer rollout drivers.

    W_q and W_k are shared between the neighbor matrix and the first-character
    query; the classifier maps aligned character features to symbol classes
    plus the EOS class.
    """

    def __init__(self, channels: int, num_classes: int):
        super().__init__()
        c = channels
        self.channels = c
        self.num_classes = num_classes
        self.w_q = nn.Parameter(torch.empty(c, c))
        self.w_k = nn.Parameter(torch.empty(c, c))
        self.w_r = nn.Parameter(torch.empty(c, c))
        self.b_r = nn.Parameter(torch.zeros(()))
        self.e_eos = nn.Parameter(torch.empty(c))
        self.cls_w = nn.Parameter(torch.empty(c, num_classes))
        self.cls_b = nn.Parameter(torch.zeros(num_classes))
        for p in (self.w_q, self.w_k, self.w_r, self.e_eos, self.cls_w):
            nn.init.trunc_normal_(p, std=0.02, a=-0.04, b=0.04)

    def sequence(self, fmap: FeatureMap) -> tuple[torch.Tensor, torch.Tensor]:
        return build_sequence(fmap, self.e_eos)

    def neighbor(self, hseq: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        return neighbor_matrix(hseq, mask, self.w_q, self.w_k, self.w_r, self.b_r)

    def first(self, fmap: FeatureMap, hseq: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        return first_attention(fmap, hseq, mask, self.w_q, self.w_k)

    def _finish(self, maps: torch.Tensor, lengths, terminated, hseq, mask) -> DecodeResult:
        g = maps @ hseq
        logits = g @ self.cls_w + self.cls_b
        return DecodeResult(maps=maps, lengths=lengths, terminated=terminated,
                            char_features=g, logits=logits, hseq=hseq, seq_mask=mask)

    def decode_train(self, fmap: FeatureMap, target_lengths: torch.Tensor) -> DecodeResult:
        """Teacher-length unrolling: exactly target length + 1 rows per sample,
        no stopping test and no sharpening."""
        hseq, mask = self.sequence(fmap)
        nmat = self.neighbor(hseq, mask)
        a0 = self.first(fmap, hseq, mask)
        lengths = target_lengths + 1
        maps = rollout_train(a0, nmat, int(lengths.max()))
        terminated = torch.ones_like(lengths, dtype=torch.bool)
        return self._finish(maps, lengths, terminated, hseq, mask)

    def decode_infer(self, fmap: FeatureMap, cfg: SharpenConfig) -> DecodeResult:
        """Unroll until the EOS column of the current map exceeds cfg.eps
        (checked from the very first map) or the per-sample step cap is hit."""
        hseq, mask = self.sequence(fmap)
        nmat = self.neighbor(hseq, mask)
        a0 = self.first(fmap, hseq, mask)
        if cfg.max_steps is not None:
            caps = torch.full((a0.shape[0],), cfg.max_steps,
                              dtype=torch.long, device=a0.device)
        else:
            caps = 4 * fmap.valid_cols
        maps, lengths, terminated = rollout_infer(a0, nmat, cfg, caps)
        return self._finish(maps, lengths, terminated, hseq, mask)

    def decode(self, fmap: FeatureMap, mode: str, cfg: SharpenConfig | None = None,
               target_lengths: torch.Tensor | None = None) -> DecodeResult:
        if mode == "train":
            if target_lengths is None:
                raise ValueError("train mode needs target_lengths")
            return self.decode_train(fmap, target_lengths)
        if mode == "infer":
            return self.decode_infer(fmap, cfg or SharpenConfig())
        raise ValueError(f"unknown decode mode {mode!r}")

    def named_tensors(self) -> dict[str, torch.Tensor]:
        return {
            "decoder.Wq": self.w_q,
            "decoder.Wk": self.w_k,
            "decoder.Wr": self.w_r,
            "decoder.br": self.b_r,
            "decoder.eos": self.e_eos,
            "decoder.cls_w": self.cls_w,
            "decoder.cls_b": self.cls_b,
        }
