"""Baseline decoders sharing the convolutional encoder.

CTC makes a dense per-column prediction with a blank class and collapses it
by rule; the parallel-attention head reads the feature sequence through a
fixed budget of learnable queries, which caps its output length structurally.
"""

from __future__ import annotations

import math

import torch
from torch import nn

from .decoder import masked_softmax

# Log-space "minus infinity" that survives logsumexp gradients.
_NEG = -1e30


def blank_id(num_symbols: int) -> int:
    return num_symbols


def ctc_forward_losses(log_probs: torch.Tensor, targets: torch.Tensor,
                       input_lengths: torch.Tensor,
                       target_lengths: torch.Tensor) -> torch.Tensor:
    """Alignment-marginal negative log-likelihood via the forward recursion.

    log_probs: (B, T, K+1) log-softmax scores, blank at index K.
    targets: (B, n_max) padded label ids; target_lengths: (B,).
    Returns per-sample losses; +inf where no alignment fits (T_b < n_b or a
    repeat needs more columns than available).
    """
    b, t_max, k1 = log_probs.shape
    blank = k1 - 1
    n_max = int(target_lengths.max())
    e = 2 * n_max + 1
    device = log_probs.device

    ext = torch.full((b, e), blank, dtype=torch.long, device=device)
    ext[:, 1::2] = targets[:, :n_max]
    pos = torch.arange(e, device=device).unsqueeze(0)
    is_char = (pos % 2).bool() & (pos < 2 * target_lengths.unsqueeze(1))
    skip_ok = torch.zeros(b, e, dtype=torch.bool, device=device)
    if e > 2:
        skip_ok[:, 2:] = is_char[:, 2:] & (ext[:, 2:] != ext[:, :-2])

    alpha = torch.full((b, e), _NEG, dtype=log_probs.dtype, device=device)
    lp0 = log_probs[:, 0, :]
    alpha[:, 0] = lp0.gather(1, ext[:, :1]).squeeze(1)
    if e > 1:
        alpha[:, 1] = lp0.gather(1, ext[:, 1:2]).squeeze(1)

    neg = torch.full((b, 1), _NEG, dtype=log_probs.dtype, device=device)
    for t in range(1, t_max):
        stay = alpha
        step1 = torch.cat([neg, alpha[:, :-1]], dim=1)
        step2 = torch.cat([neg, neg, alpha[:, :-2]], dim=1) if e > 2 else torch.full_like(alpha, _NEG)
        step2 = torch.where(skip_ok, step2, torch.full_like(step2, _NEG))
        merged = torch.logsumexp(torch.stack([stay, step1, step2]), dim=0)
        emit = log_probs[:, t, :].gather(1, ext)
        new = merged + emit
        update = (t < input_lengths).unsqueeze(1)
        alpha = torch.where(update, new, alpha)

    last = 2 * target_lengths
    tail = torch.stack([
        alpha.gather(1, last.unsqueeze(1)).squeeze(1),
        alpha.gather(1, (last - 1).clamp_min(0).unsqueeze(1)).squeeze(1),
    ])
    loss = -torch.logsumexp(tail, dim=0)
    # Zero total alignment probability (too few columns, or repeats that
    # would need blanks the width cannot fit) is a true +inf, not -_NEG.
    infeasible = (input_lengths < target_lengths) | (loss >= -_NEG * 0.5)
    return torch.where(infeasible, torch.full_like(loss, float("inf")), loss)


def ctc_loss(col_logits: torch.Tensor, target: list[int]) -> torch.Tensor:
    """Loss for one sample: col_logits (T, K+1) raw scores, blank last."""
    t, _ = col_logits.shape
    if t < len(target):
        return torch.tensor(float("inf"), dtype=col_logits.dtype)
    lp = torch.log_softmax(col_logits, dim=-1).unsqueeze(0)
    targets = torch.tensor([target], dtype=torch.long)
    return ctc_forward_losses(
        lp, targets,
        torch.tensor([t]), torch.tensor([len(target)])).squeeze(0)


def ctc_greedy_decode(col_logits: torch.Tensor) -> list[int]:
    """Argmax per column, collapse adjacent repeats, drop blanks."""
    blank = col_logits.shape[-1] - 1
    path = col_logits.argmax(dim=-1).tolist()
    out = []
    prev = None
    for p in path:
        if p != blank and p != prev:
            out.append(p)
        prev = p
    return out


class CTCHead(nn.Module):
    """Per-column classifier over symbols plus a trailing blank class."""

    def __init__(self, channels: int, num_symbols: int):
        super().__init__()
        self.num_symbols = num_symbols
        self.w = nn.Parameter(torch.empty(channels, num_symbols + 1))
        self.b = nn.Parameter(torch.zeros(num_symbols + 1))
        nn.init.trunc_normal_(self.w, std=0.02, a=-0.04, b=0.04)

    def forward(self, fmap_values: torch.Tensor) -> torch.Tensor:
        """(B, c, 1, w) -> column logits (B, w, K+1)."""
        cols = fmap_values.squeeze(2).transpose(1, 2)
        return cols @ self.w + self.b

    def named_tensors(self) -> dict[str, torch.Tensor]:
        return {"ctc.w": self.w, "ctc.b": self.b}


class PATHead(nn.Module):
    """Fixed budget of learnable queries, each reading one output slot in
    parallel; strings longer than the budget are unreachable by construction."""

    def __init__(self, channels: int, num_symbols: int, t_max: int = 12):
        super().__init__()
        c = channels
        self.t_max = t_max
        self.num_symbols = num_symbols
        self.queries = nn.Parameter(torch.empty(t_max, c))
        self.k_w = nn.Parameter(torch.empty(c, c))
        self.k_b = nn.Parameter(torch.zeros(c))
        self.v_w = nn.Parameter(torch.empty(c, c))
        self.v_b = nn.Parameter(torch.zeros(c))
        self.cls_w = nn.Parameter(torch.empty(c, num_symbols + 1))
        self.cls_b = nn.Parameter(torch.zeros(num_symbols + 1))
        for p in (self.queries, self.k_w, self.v_w, self.cls_w):
            nn.init.trunc_normal_(p, std=0.02, a=-0.04, b=0.04)

    @property
    def eos_class(self) -> int:
        return self.num_symbols

    def decode(self, hseq: torch.Tensor, mask: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """One masked cross-attention readout per query.

        Returns (attention (B, T_max, S), logits (B, T_max, K+1)).
        """
        c = hseq.shape[-1]
        keys = hseq @ self.k_w + self.k_b
        values = hseq @ self.v_w + self.v_b
        scores = self.queries.to(hseq.dtype) @ keys.transpose(-2, -1) / math.sqrt(c)
        attn = masked_softmax(scores, mask.unsqueeze(-2))
        read = attn @ values
        logits = read @ self.cls_w + self.cls_b
        return attn, logits

    def prediction(self, logits_row: torch.Tensor) -> list[int]:
        """Argmax per slot, truncated at the first EOS-class hit."""
        ids = logits_row.argmax(dim=-1).tolist()
        out = []
        for i in ids:
            if i == self.eos_class:
                break
            out.append(i)
        return out

    def named_tensors(self) -> dict[str, torch.Tensor]:
        return {
            "pat.queries": self.queries,
            "pat.k_w": self.k_w, "pat.k_b": self.k_b,
            "pat.v_w": self.v_w, "pat.v_b": self.v_b,
            "pat.cls_w": self.cls_w, "pat.cls_b": self.cls_b,
        }
