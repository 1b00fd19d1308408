"""Synthetic glyph-string corpora with controllable length distributions.

A corpus is a directory of binary greymap (P5) images plus a tab-separated
manifest.  Glyphs are fixed random-but-distinct binary bitmaps generated once
from a master seed and stored alongside the corpus, so every label is
renderable without font assets and every class is learnable by a small
convolutional encoder.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

IMAGE_HEIGHT = 32
PAD_VALUE = 0.0

_STRIP_HEIGHT = 16
_STRIP_MARGIN = 2
_GLYPH_TOP = 4
_SCALE = IMAGE_HEIGHT // _STRIP_HEIGHT
_NOISE_AMPLITUDE = 0.1
_NOISE_STREAM = 1 << 20


@dataclass(frozen=True)
class GlyphAlphabet:
    """Ordered symbol set with one distinct binary bitmap per symbol.

    Class ids are contiguous from 0; the end-of-sequence class sits one past
    the last symbol id.
    """

    glyphs: np.ndarray  # (n_symbols, k, k) uint8 in {0, 1}
    master_seed: int

    def __post_init__(self):
        g = self.glyphs
        if g.ndim != 3 or g.shape[1] != g.shape[2]:
            raise ValueError(f"glyphs must be (n, k, k), got {g.shape}")
        flat = {g[i].tobytes() for i in range(g.shape[0])}
        if len(flat) != g.shape[0]:
            raise ValueError("glyph bitmaps must be pairwise distinct")

    @property
    def n_symbols(self) -> int:
        return self.glyphs.shape[0]

    @property
    def glyph_size(self) -> int:
        return self.glyphs.shape[1]

    @property
    def eos_id(self) -> int:
        return self.n_symbols

    @property
    def num_classes(self) -> int:
        return self.n_symbols + 1

    @classmethod
    def generate(cls, n_symbols: int = 10, glyph_size: int = 8,
                 master_seed: int = 0) -> "GlyphAlphabet":
        """Draw pairwise-distinct binary bitmaps from the master seed."""
        rng = np.random.default_rng([master_seed, 0x617A])
        glyphs = []
        seen = set()
        while len(glyphs) < n_symbols:
            g = (rng.random((glyph_size, glyph_size)) < 0.45).astype(np.uint8)
            # Reject degenerate or duplicate bitmaps; empty border columns are
            # allowed, but a fully blank glyph would be unrenderable.
            if g.sum() < 4 or g.sum() > glyph_size * glyph_size - 4:
                continue
            key = g.tobytes()
            if key in seen:
                continue
            seen.add(key)
            glyphs.append(g)
        return cls(glyphs=np.stack(glyphs), master_seed=master_seed)

    def save(self, path: str) -> None:
        payload = {
            "master_seed": self.master_seed,
            "glyph_size": self.glyph_size,
            "glyphs": self.glyphs.reshape(self.n_symbols, -1).tolist(),
        }
        with open(path, "w") as fh:
            json.dump(payload, fh)

    @classmethod
    def load(cls, path: str) -> "GlyphAlphabet":
        with open(path) as fh:
            payload = json.load(fh)
        k = payload["glyph_size"]
        glyphs = np.asarray(payload["glyphs"], dtype=np.uint8).reshape(-1, k, k)
        return cls(glyphs=glyphs, master_seed=payload["master_seed"])


@dataclass(frozen=True)
class LengthDistribution:
    """Label-length law: uniform mass or geometric-style long-tail decay."""

    kind: str  # "longtail" | "uniform"
    min_len: int
    max_len: int
    decay: float = 0.7  # longtail only: P(len) proportional to decay**len

    def __post_init__(self):
        if self.kind not in ("longtail", "uniform"):
            raise ValueError(f"unknown length distribution kind: {self.kind!r}")
        if self.min_len < 1:
            raise ValueError("min_len must be >= 1")
        if self.max_len < self.min_len:
            raise ValueError("max_len must be >= min_len")
        if not 0.0 < self.decay <= 1.0:
            raise ValueError("decay must be in (0, 1]")

    def lengths(self) -> np.ndarray:
        return np.arange(self.min_len, self.max_len + 1)

    def probs(self) -> np.ndarray:
        ls = self.lengths()
        if self.kind == "uniform":
            p = np.ones(len(ls))
        else:
            p = self.decay ** ls.astype(np.float64)
        return p / p.sum()


def length_sampler(dist: LengthDistribution, rng: np.random.Generator) -> int:
    """Draw one label length in [min_len, max_len] under the distribution."""
    ls = dist.lengths()
    return int(rng.choice(ls, p=dist.probs()))


@dataclass
class Sample:
    """One rendered glyph string: padded in batches, never internally."""

    image: np.ndarray  # (32, W) float32 in [0, 1]
    label: list[int]
    valid_width: int

    def __post_init__(self):
        if self.image.shape[0] != IMAGE_HEIGHT:
            raise ValueError(f"image height must be {IMAGE_HEIGHT}")
        if self.valid_width > self.image.shape[1]:
            raise ValueError("valid_width exceeds image width")


def _position_draws(seed: int, index: int) -> tuple[int, int]:
    # Jitter/gap come from a per-position stream keyed by (seed, index) only,
    # so a longer label reuses the shorter label's leading geometry; this is
    # what makes valid_width strictly increasing in label length.
    rng = np.random.default_rng([seed, index])
    jitter = int(rng.integers(-2, 3))
    gap = int(rng.integers(0, 4))
    return jitter, gap


def render_sample(label: list[int], alphabet: GlyphAlphabet, rng_seed: int) -> Sample:
    """Render a label as a 32-row image; bit-identical for fixed inputs."""
    if len(label) == 0:
        raise ValueError("empty label")
    for sym in label:
        if not 0 <= sym < alphabet.n_symbols:
            raise ValueError(f"unknown symbol id {sym}")

    k = alphabet.glyph_size
    jitters, gaps = [], []
    for i in range(len(label)):
        jitter, gap = _position_draws(rng_seed, i)
        jitters.append(jitter)
        gaps.append(gap)

    strip_width = 2 * _STRIP_MARGIN + len(label) * k + sum(gaps[1:])
    strip = np.zeros((_STRIP_HEIGHT, strip_width), dtype=np.float32)
    x = _STRIP_MARGIN
    for i, sym in enumerate(label):
        if i > 0:
            x += gaps[i]
        y = _GLYPH_TOP + jitters[i]
        strip[y:y + k, x:x + k] = alphabet.glyphs[sym]
        x += k

    image = strip.repeat(_SCALE, axis=0).repeat(_SCALE, axis=1)
    noise_rng = np.random.default_rng([rng_seed, _NOISE_STREAM])
    image += noise_rng.uniform(0.0, _NOISE_AMPLITUDE, size=image.shape).astype(np.float32)
    image = np.clip(image, 0.0, 1.0).astype(np.float32)
    return Sample(image=image, label=list(label), valid_width=image.shape[1])


def write_pgm(path: str, image: np.ndarray) -> None:
    """Write a [0,1] float image as an 8-bit binary greymap (P5)."""
    h, w = image.shape
    data = np.rint(np.asarray(image) * 255.0).clip(0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def read_pgm_u8(path: str) -> np.ndarray:
    """Read a binary P5 greymap as raw uint8 rows."""
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic != b"P5":
            raise ValueError(f"{path}: not a binary P5 greymap")
        w, h = (int(v) for v in fh.readline().split())
        maxval = int(fh.readline())
        if maxval != 255:
            raise ValueError(f"{path}: expected 8-bit greymap")
        data = np.frombuffer(fh.read(w * h), dtype=np.uint8)
    if data.size != w * h:
        raise ValueError(f"{path}: truncated pixel data")
    return data.reshape(h, w)


def read_pgm(path: str) -> np.ndarray:
    """Read a binary P5 greymap back into a [0,1] float32 array."""
    return read_pgm_u8(path).astype(np.float32) / 255.0


@dataclass
class ManifestRow:
    sample_id: int
    label: list[int]
    valid_width: int
    filename: str


MANIFEST_NAME = "manifest.tsv"
ALPHABET_NAME = "alphabet.json"


def write_corpus(out_dir: str, labels: list[list[int]], sample_seeds,
                 alphabet: GlyphAlphabet, meta: dict) -> list[ManifestRow]:
    """Render the given labels into out_dir and write manifest + alphabet."""
    os.makedirs(out_dir, exist_ok=True)
    os.makedirs(os.path.join(out_dir, "images"), exist_ok=True)
    rows = []
    for i, label in enumerate(labels):
        sample = render_sample(label, alphabet, int(sample_seeds[i]))
        filename = f"images/{i:06d}.pgm"
        write_pgm(os.path.join(out_dir, filename), sample.image)
        rows.append(ManifestRow(i, label, sample.valid_width, filename))
    with open(os.path.join(out_dir, MANIFEST_NAME), "w") as fh:
        for row in rows:
            label_txt = " ".join(str(s) for s in row.label)
            fh.write(f"{row.sample_id}\t{label_txt}\t{row.valid_width}\t{row.filename}\n")
    alphabet.save(os.path.join(out_dir, ALPHABET_NAME))
    with open(os.path.join(out_dir, "meta.json"), "w") as fh:
        json.dump(meta, fh, indent=2)
    return rows


def build_corpus(out_dir: str, n: int, dist: LengthDistribution,
                 alphabet: GlyphAlphabet, rng_seed: int) -> list[ManifestRow]:
    """Render n samples into out_dir and write the manifest.

    Lengths follow `dist`; symbols are drawn uniformly.  Per-sample render
    seeds derive from `rng_seed`, so the corpus is reproducible end to end.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(rng_seed)
    lengths = rng.choice(dist.lengths(), size=n, p=dist.probs())
    sample_seeds = rng.integers(0, 2**31 - 1, size=n)
    labels = [rng.integers(0, alphabet.n_symbols, size=int(lengths[i])).tolist()
              for i in range(n)]
    meta = {
        "n": n,
        "seed": rng_seed,
        "dist": {"kind": dist.kind, "min_len": dist.min_len,
                 "max_len": dist.max_len, "decay": dist.decay},
    }
    return write_corpus(out_dir, labels, sample_seeds, alphabet, meta)


def read_manifest(corpus_dir: str) -> list[ManifestRow]:
    path = os.path.join(corpus_dir, MANIFEST_NAME)
    rows = []
    with open(path) as fh:
        for line_no, line in enumerate(fh):
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 4:
                raise ValueError(f"{path}: malformed manifest row {line_no}")
            sample_id, label_txt, valid_width, filename = parts
            label = [int(v) for v in label_txt.split()]
            rows.append(ManifestRow(int(sample_id), label, int(valid_width), filename))
    return rows
