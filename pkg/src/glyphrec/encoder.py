"""Position-free convolutional feature extractor.

Maps a 32-row image batch to a feature map with height squeezed to 1 and
width downsampled 4x.  Every operation is a convolution or a pointwise
nonlinearity, so features are shift-equivariant along width; nothing in the
stack reads absolute position.  Width masks are re-applied after every stage,
which keeps padded batches bit-identical to solo encodes at valid columns.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn

from .corpus import IMAGE_HEIGHT

WIDTH_DOWNSAMPLE = 4


@dataclass
class FeatureMap:
    """Encoder output: (B, c, 1, w) values plus per-sample valid column counts."""

    values: torch.Tensor
    valid_cols: torch.Tensor  # (B,) long
    iteration: int = 0

    @property
    def width(self) -> int:
        return self.values.shape[-1]

    @property
    def channels(self) -> int:
        return self.values.shape[1]


def feature_width(image_width: int) -> int:
    return math.ceil(image_width / WIDTH_DOWNSAMPLE)


def valid_feature_cols(valid_widths: torch.Tensor) -> torch.Tensor:
    return torch.div(valid_widths + WIDTH_DOWNSAMPLE - 1, WIDTH_DOWNSAMPLE,
                     rounding_mode="floor")


def column_mask(valid_cols: torch.Tensor, width: int) -> torch.Tensor:
    """(B, w) bool mask, True at columns < valid_cols."""
    idx = torch.arange(width, device=valid_cols.device)
    return idx.unsqueeze(0) < valid_cols.unsqueeze(1)


def _init_conv(conv: nn.Conv2d) -> nn.Conv2d:
    # fan-in-scaled truncated normal: six stacked conv stages carry no
    # normalization, so a fixed small std would attenuate activations to the
    # point where the downstream bilinear attention starts out flat
    fan_in = conv.weight.shape[1] * conv.weight.shape[2] * conv.weight.shape[3]
    std = math.sqrt(2.0 / fan_in)
    nn.init.trunc_normal_(conv.weight, std=std, a=-2 * std, b=2 * std)
    nn.init.zeros_(conv.bias)
    return conv


class ConvEncoder(nn.Module):
    """Four conv stages: two stride-2 width reductions, strided height collapse.

    stage1: 3x3 stride (2,2), 1 -> c/2
    stage2: 3x3 stride (2,2), c/2 -> c      (width now 4x downsampled)
    stage3: 3 convs 3x3 stride (2,1), c -> c (height 8 -> 1)
    stage4: 3x3 stride (1,1), c -> c
    """

    def __init__(self, channels: int = 64):
        super().__init__()
        if channels % 2 != 0:
            raise ValueError("channels must be even")
        self.channels = channels
        self.stage1 = _init_conv(nn.Conv2d(1, channels // 2, 3, stride=(2, 2), padding=1))
        self.stage2 = _init_conv(nn.Conv2d(channels // 2, channels, 3, stride=(2, 2), padding=1))
        # the middle height-pooling conv mixes height only, which bounds the
        # shift-equivariance boundary band at 2 feature columns
        self.stage3 = nn.ModuleList([
            _init_conv(nn.Conv2d(channels, channels, 3, stride=(2, 1), padding=1)),
            _init_conv(nn.Conv2d(channels, channels, (3, 1), stride=(2, 1), padding=(1, 0))),
            _init_conv(nn.Conv2d(channels, channels, 3, stride=(2, 1), padding=1)),
        ])
        self.stage4 = _init_conv(nn.Conv2d(channels, channels, 3, stride=(1, 1), padding=1))
        self.act = nn.GELU()

    def forward(self, images: torch.Tensor, valid_widths: torch.Tensor) -> FeatureMap:
        """images: (B, 1, 32, W) in [0, 1]; valid_widths: (B,) long."""
        if images.ndim != 4 or images.shape[2] != IMAGE_HEIGHT:
            raise ValueError(
                f"expected images of shape (B, 1, {IMAGE_HEIGHT}, W), got {tuple(images.shape)}")

        def mask_cols(x: torch.Tensor, valid: torch.Tensor) -> torch.Tensor:
            m = column_mask(valid, x.shape[-1]).to(x.dtype)
            return x * m[:, None, None, :]

        v = valid_widths
        x = images
        for conv, stride_w in [(self.stage1, 2), (self.stage2, 2)]:
            x = self.act(conv(x))
            v = torch.div(v + stride_w - 1, stride_w, rounding_mode="floor")
            x = mask_cols(x, v)
        for conv in self.stage3:
            x = self.act(conv(x))
            x = mask_cols(x, v)
        x = self.act(self.stage4(x))
        x = mask_cols(x, v)
        return FeatureMap(values=x, valid_cols=v, iteration=0)

    def named_tensors(self) -> dict[str, torch.Tensor]:
        out = {
            "encoder.stage1.weight": self.stage1.weight,
            "encoder.stage1.bias": self.stage1.bias,
            "encoder.stage2.weight": self.stage2.weight,
            "encoder.stage2.bias": self.stage2.bias,
            "encoder.stage4.weight": self.stage4.weight,
            "encoder.stage4.bias": self.stage4.bias,
        }
        for i, conv in enumerate(self.stage3, start=1):
            out[f"encoder.stage3.conv{i}.weight"] = conv.weight
            out[f"encoder.stage3.conv{i}.bias"] = conv.bias
        return out
