"""Model assemblies: the neighbor-decoding recognizer with optional iterative
feature enhancement, and the CTC / parallel-attention baselines sharing the
same encoder."""

from __future__ import annotations

import torch
from torch import nn

from .baselines import CTCHead, PATHead
from .decoder import DecodeResult, NeighborDecoder, SharpenConfig
from .encoder import ConvEncoder, FeatureMap
from .fem import FeatureEnhancer


class Recognizer(nn.Module):
    """Encoder + neighbor decoder, optionally iterated through enhancement.

    With a single iteration this is the bare neighbor decoder; with more, each
    round contextualizes the aligned character features and feeds an enhanced
    feature map to the next decode.  The last iteration's prediction wins.
    """

    kind = "nd"

    def __init__(self, num_symbols: int, channels: int = 64, fem_iters: int = 1,
                 fem_heads: int = 8, fem_window: int = 11,
                 fem_trans_layers: int = 1, fem_conv_blocks: int = 1):
        super().__init__()
        if fem_iters < 1:
            raise ValueError("fem_iters must be >= 1")
        self.num_symbols = num_symbols
        self.iters = fem_iters
        self.encoder = ConvEncoder(channels)
        self.decoder = NeighborDecoder(channels, num_symbols + 1)
        self.fem = (FeatureEnhancer(channels, heads=fem_heads, window=fem_window,
                                    trans_layers=fem_trans_layers,
                                    conv_blocks=fem_conv_blocks)
                    if fem_iters > 1 else None)

    def run_iterations(self, fmap: FeatureMap, mode: str,
                       cfg: SharpenConfig | None = None,
                       target_lengths: torch.Tensor | None = None) -> list[DecodeResult]:
        results = []
        current = fmap
        for i in range(self.iters):
            result = self.decoder.decode(current, mode, cfg=cfg,
                                         target_lengths=target_lengths)
            results.append(result)
            if i < self.iters - 1:
                g_ctx = self.fem.contextualize(result.char_features, result.row_mask())
                current = self.fem.enhance(result, g_ctx, current)
        return results

    def forward(self, images: torch.Tensor, valid_widths: torch.Tensor, mode: str,
                cfg: SharpenConfig | None = None,
                target_lengths: torch.Tensor | None = None) -> list[DecodeResult]:
        fmap = self.encoder(images, valid_widths)
        return self.run_iterations(fmap, mode, cfg=cfg, target_lengths=target_lengths)

    def predict(self, images: torch.Tensor, valid_widths: torch.Tensor,
                cfg: SharpenConfig | None = None) -> tuple[list[list[int]], DecodeResult]:
        results = self.forward(images, valid_widths, "infer", cfg=cfg)
        final = results[-1]
        return final.predictions(), final

    def named_tensors(self) -> dict[str, torch.Tensor]:
        out = {}
        out.update(self.encoder.named_tensors())
        out.update(self.decoder.named_tensors())
        if self.fem is not None:
            out.update(self.fem.named_tensors())
        return out


class CTCModel(nn.Module):
    kind = "ctc"

    def __init__(self, num_symbols: int, channels: int = 64):
        super().__init__()
        self.num_symbols = num_symbols
        self.encoder = ConvEncoder(channels)
        self.head = CTCHead(channels, num_symbols)

    def forward(self, images: torch.Tensor, valid_widths: torch.Tensor):
        fmap = self.encoder(images, valid_widths)
        return self.head(fmap.values), fmap.valid_cols

    def predict(self, images: torch.Tensor, valid_widths: torch.Tensor, cfg=None):
        from .baselines import ctc_greedy_decode
        col_logits, valid_cols = self.forward(images, valid_widths)
        preds = [ctc_greedy_decode(col_logits[b, :int(valid_cols[b])])
                 for b in range(col_logits.shape[0])]
        return preds, None

    def named_tensors(self) -> dict[str, torch.Tensor]:
        out = {}
        out.update(self.encoder.named_tensors())
        out.update(self.head.named_tensors())
        return out


class PATModel(nn.Module):
    kind = "pat"

    def __init__(self, num_symbols: int, channels: int = 64, t_max: int = 12):
        super().__init__()
        self.num_symbols = num_symbols
        self.encoder = ConvEncoder(channels)
        self.head = PATHead(channels, num_symbols, t_max=t_max)
        self.e_eos = nn.Parameter(torch.empty(channels))
        nn.init.trunc_normal_(self.e_eos, std=0.02, a=-0.04, b=0.04)

    def forward(self, images: torch.Tensor, valid_widths: torch.Tensor):
        from .decoder import build_sequence
        fmap = self.encoder(images, valid_widths)
        hseq, mask = build_sequence(fmap, self.e_eos)
        return self.head.decode(hseq, mask)

    def predict(self, images: torch.Tensor, valid_widths: torch.Tensor, cfg=None):
        _, logits = self.forward(images, valid_widths)
        preds = [self.head.prediction(logits[b]) for b in range(logits.shape[0])]
        return preds, None

    def named_tensors(self) -> dict[str, torch.Tensor]:
        out = {}
        out.update(self.encoder.named_tensors())
        out.update(self.head.named_tensors())
        out["pat.eos"] = self.e_eos
        return out


def build_model(kind: str, num_symbols: int, channels: int = 64,
                fem_iters: int = 1, fem_heads: int = 8, fem_window: int = 11,
                fem_trans_layers: int = 1, fem_conv_blocks: int = 1,
                pat_max_len: int = 12) -> nn.Module:
    if kind == "nd":
        return Recognizer(num_symbols, channels=channels, fem_iters=fem_iters,
                          fem_heads=fem_heads, fem_window=fem_window,
                          fem_trans_layers=fem_trans_layers,
                          fem_conv_blocks=fem_conv_blocks)
    if kind == "ctc":
        return CTCModel(num_symbols, channels=channels)
    if kind == "pat":
        return PATModel(num_symbols, channels=channels, t_max=pat_max_len)
    raise ValueError(f"unknown decoder kind {kind!r}")
