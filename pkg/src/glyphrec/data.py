"""Corpus loading and batch collation for training and evaluation.

Batches are padded with zeros to the widest sample (masks carry the true
widths downstream) or bilinearly resized to one fixed width, matching the
two preprocessing modes under comparison.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import torch

from .corpus import (ALPHABET_NAME, IMAGE_HEIGHT, GlyphAlphabet, read_manifest,
                     read_pgm_u8)


@dataclass
class LoadedCorpus:
    root: str
    images: list[np.ndarray]  # per-sample (32, W) uint8
    labels: list[list[int]]
    valid_widths: np.ndarray
    alphabet: GlyphAlphabet

    def __len__(self) -> int:
        return len(self.images)

    def lengths(self) -> np.ndarray:
        return np.array([len(lbl) for lbl in self.labels])


def load_corpus(corpus_dir: str) -> LoadedCorpus:
    """Load every manifest row, failing loudly with the offending row id."""
    alphabet = GlyphAlphabet.load(os.path.join(corpus_dir, ALPHABET_NAME))
    rows = read_manifest(corpus_dir)
    if not rows:
        raise ValueError(f"{corpus_dir}: corpus is empty")
    images, labels, widths = [], [], []
    for row in rows:
        path = os.path.join(corpus_dir, row.filename)
        if not os.path.exists(path):
            raise ValueError(f"corpus row {row.sample_id}: missing image {row.filename}")
        img = read_pgm_u8(path)
        if img.shape[0] != IMAGE_HEIGHT:
            raise ValueError(f"corpus row {row.sample_id}: image height {img.shape[0]} != {IMAGE_HEIGHT}")
        if not row.label:
            raise ValueError(f"corpus row {row.sample_id}: empty label")
        if any(not 0 <= s < alphabet.n_symbols for s in row.label):
            raise ValueError(f"corpus row {row.sample_id}: label id out of range")
        if row.valid_width > img.shape[1]:
            raise ValueError(f"corpus row {row.sample_id}: valid_width {row.valid_width} "
                             f"exceeds image width {img.shape[1]}")
        images.append(img)
        labels.append(row.label)
        widths.append(row.valid_width)
    return LoadedCorpus(root=corpus_dir, images=images, labels=labels,
                        valid_widths=np.array(widths), alphabet=alphabet)


def collate(data: LoadedCorpus, indices, preprocess: str = "pad",
            resize_width: int = 64, max_batch_width: int = 416,
            dtype: torch.dtype = torch.float32):
    """Stack the selected samples into (images, valid_widths, labels)."""
    imgs = [data.images[i] for i in indices]
    labels = [data.labels[i] for i in indices]
    if preprocess == "resize":
        stack = []
        for img in imgs:
            t = torch.from_numpy(img.astype(np.float32) / 255.0)[None, None]
            stack.append(torch.nn.functional.interpolate(
                t, size=(IMAGE_HEIGHT, resize_width), mode="bilinear", align_corners=False))
        batch = torch.cat(stack, dim=0).to(dtype)
        widths = torch.full((len(imgs),), resize_width, dtype=torch.long)
        return batch, widths, labels

    wmax = max(img.shape[1] for img in imgs)
    if wmax > max_batch_width:
        raise ValueError(f"batch width {wmax} exceeds max_batch_width {max_batch_width}")
    batch = torch.zeros(len(imgs), 1, IMAGE_HEIGHT, wmax, dtype=dtype)
    for i, img in enumerate(imgs):
        batch[i, 0, :, :img.shape[1]] = torch.from_numpy(img.astype(np.float32) / 255.0)
    widths = torch.tensor([int(data.valid_widths[i]) for i in indices], dtype=torch.long)
    return batch, widths, labels


def make_targets(labels: list[list[int]], eos_id: int,
                 device=None) -> tuple[torch.Tensor, torch.Tensor]:
    """Pad labels with the EOS class: row b is [y_0 .. y_{n-1}, EOS, EOS, ...].

    Returns (targets (B, max_n + 1), lengths (B,) = label length + 1)."""
    lengths = torch.tensor([len(l) + 1 for l in labels], dtype=torch.long, device=device)
    t_max = int(lengths.max())
    targets = torch.full((len(labels), t_max), eos_id, dtype=torch.long, device=device)
    for b, lbl in enumerate(labels):
        targets[b, :len(lbl)] = torch.tensor(lbl, dtype=torch.long)
    return targets, lengths
