"""Training configuration: a flat dataclass, readable from plain-text
key=value files and overridable by repeated key=value flags."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass


@dataclass
class TrainConfig:
    corpus: str = ""
    out: str = ""
    decoder: str = "nd"            # nd | ctc | pat
    batch_size: int = 64
    epochs: int = 10
    lr_peak: float = 1e-3
    lr_floor: float = 5e-7
    warmup_steps: int = 200
    weight_decay: float = 0.05
    seed: int = 0
    preprocess: str = "pad"        # pad | resize
    resize_width: int = 64
    max_batch_width: int = 416
    channels: int = 64
    fem_iters: int = 1
    fem_trans_layers: int = 1
    fem_conv_blocks: int = 1
    fem_window: int = 11
    fem_heads: int = 8
    pat_max_len: int = 12

    def validate(self, total_steps: int | None = None) -> None:
        if self.decoder not in ("nd", "ctc", "pat"):
            raise ValueError(f"decoder must be nd, ctc or pat, got {self.decoder!r}")
        if self.preprocess not in ("pad", "resize"):
            raise ValueError(f"preprocess must be pad or resize, got {self.preprocess!r}")
        if self.lr_floor >= self.lr_peak:
            raise ValueError("lr_floor must be below lr_peak")
        if total_steps is not None and self.warmup_steps >= total_steps:
            raise ValueError(
                f"warmup_steps ({self.warmup_steps}) must be below total steps ({total_steps})")


# Dotted spellings used in config files map onto dataclass fields.
_KEY_ALIASES = {
    "fem.iters": "fem_iters",
    "fem.trans_layers": "fem_trans_layers",
    "fem.conv_blocks": "fem_conv_blocks",
    "fem.window": "fem_window",
    "fem.heads": "fem_heads",
}

def set_key(cfg, key: str, raw: str) -> None:
    """Coerce raw text onto a dataclass field, honoring dotted aliases."""
    name = _KEY_ALIASES.get(key, key)
    if name not in {f.name for f in dataclasses.fields(cfg)}:
        raise ValueError(f"unknown config key {key!r}")
    current = getattr(cfg, name)
    if isinstance(current, bool):
        value = raw.lower() in ("1", "true", "yes", "on")
    elif isinstance(current, int):
        value = int(raw)
    elif isinstance(current, float):
        value = float(raw)
    else:
        value = raw
    setattr(cfg, name, value)


def load_config(path: str, cfg=None):
    """Read a key=value file (# starts a comment, blank lines ignored)."""
    cfg = cfg if cfg is not None else TrainConfig()
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            if "=" not in body:
                raise ValueError(f"{path}:{line_no}: expected key=value, got {line.rstrip()!r}")
            key, raw = (part.strip() for part in body.split("=", 1))
            set_key(cfg, key, raw)
    return cfg


def apply_overrides(cfg, pairs: list[str]):
    for pair in pairs:
        if "=" not in pair:
            raise ValueError(f"override must be key=value, got {pair!r}")
        key, raw = (part.strip() for part in pair.split("=", 1))
        set_key(cfg, key, raw)
    return cfg


def config_echo(cfg) -> dict:
    return dataclasses.asdict(cfg)
