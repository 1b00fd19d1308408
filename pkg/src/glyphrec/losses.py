"""Three-part training loss: recognition cross-entropy, ending-location
penalty on the final attention row, and a normalized entropy regularizer
pushing every attention row toward a single feature position.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch

from .decoder import DecodeResult

LAMBDA_EOS = 0.01
LAMBDA_ENT = 0.001
LOG_FLOOR = 1e-12


@dataclass
class IterationLoss:
    rec: float
    eos: float
    ent: float
    total: float


@dataclass
class LossBreakdown:
    per_iteration: list[IterationLoss] = field(default_factory=list)

    @property
    def rec(self) -> float:
        return sum(i.rec for i in self.per_iteration) / len(self.per_iteration)

    @property
    def eos(self) -> float:
        return sum(i.eos for i in self.per_iteration) / len(self.per_iteration)

    @property
    def ent(self) -> float:
        return sum(i.ent for i in self.per_iteration) / len(self.per_iteration)

    @property
    def total(self) -> float:
        return sum(i.total for i in self.per_iteration) / len(self.per_iteration)


def rec_loss(logits: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean cross-entropy over all rows of one sample.

    logits: (L, num_classes); target: (L,) ids with the EOS class last.
    """
    if int(target.max()) >= logits.shape[-1] or int(target.min()) < 0:
        raise ValueError("target class id out of range")
    logp = torch.log_softmax(logits, dim=-1)
    return -logp.gather(1, target.unsqueeze(1)).mean()


def eos_loss(maps: torch.Tensor) -> torch.Tensor:
    """-log of the EOS-column mass of the last attention row; maps: (L, S)."""
    return -torch.log(maps[-1, -1].clamp_min(LOG_FLOOR))


def entropy_loss(maps: torch.Tensor) -> torch.Tensor:
    """Normalized Shannon entropy of the rollout, in [0, 1); maps: (L, S).

    Zero entries contribute exactly 0 (the 0*log 0 convention)."""
    l, s = maps.shape
    plogp = maps * torch.log(maps.clamp_min(LOG_FLOOR))
    return -plogp.sum() / (l * math.log(1.0 + s))


def batched_objectives(result: DecodeResult, targets: torch.Tensor,
                       lengths: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Batch means of (rec, eos, ent) for one decode iteration.

    targets: (B, T) padded class ids whose row b is the label plus the EOS
    class at position lengths[b]-1; lengths = label length + 1.
    """
    logits, maps = result.logits, result.maps
    b, t, s = maps.shape
    if int(targets.max()) >= logits.shape[-1] or int(targets.min()) < 0:
        raise ValueError("target class id out of range")
    row_valid = (torch.arange(t, device=maps.device).unsqueeze(0)
                 < lengths.unsqueeze(1)).to(maps.dtype)

    logp = torch.log_softmax(logits, dim=-1)
    picked = logp.gather(2, targets.unsqueeze(2)).squeeze(2)
    rec = (-(picked * row_valid).sum(dim=1) / lengths.to(maps.dtype)).mean()

    last = (lengths - 1).view(b, 1, 1).expand(b, 1, s)
    eos_mass = maps.gather(1, last)[:, 0, -1]
    eos = (-torch.log(eos_mass.clamp_min(LOG_FLOOR))).mean()

    plogp = maps * torch.log(maps.clamp_min(LOG_FLOOR))
    per_sample = -(plogp.sum(dim=2) * row_valid).sum(dim=1) / (
        lengths.to(maps.dtype) * math.log(1.0 + s))
    ent = per_sample.mean()
    return rec, eos, ent


def total_loss(results: list[DecodeResult], targets: torch.Tensor,
               lengths: torch.Tensor, lam1: float = LAMBDA_EOS,
               lam2: float = LAMBDA_ENT) -> tuple[torch.Tensor, LossBreakdown]:
    """Average the three-part objective over decode iterations.

    Returns the scalar to backpropagate and the float breakdown for logging.
    """
    if not results:
        raise ValueError("need at least one decode iteration")
    breakdown = LossBreakdown()
    totals = []
    for result in results:
        rec, eos, ent = batched_objectives(result, targets, lengths)
        tot = rec + lam1 * eos + lam2 * ent
        totals.append(tot)
        breakdown.per_iteration.append(
            IterationLoss(rec=float(rec.detach()), eos=float(eos.detach()),
                          ent=float(ent.detach()), total=float(tot.detach())))
    return torch.stack(totals).mean(), breakdown
