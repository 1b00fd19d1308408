"""Length-extrapolation protocol.

Trains the decoder grid on a long-tail corpus capped at a maximum length,
then evaluates every variant on a balanced corpus covering twice that length
range: the neighbor decoder with and without attention sharpening, the
enhanced two-iteration model, and the CTC / parallel-attention baselines.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass

import numpy as np

from .checkpoint import META_NAME, load_checkpoint
from .config import TrainConfig
from .corpus import GlyphAlphabet, LengthDistribution, build_corpus, write_corpus
from .data import load_corpus
from .decoder import SharpenConfig
from .evaluate import (LengthReport, compare_reports, evaluate_by_length,
                       save_report)
from .train import train


@dataclass
class ExtrapolationConfig:
    workdir: str = ""
    seed: int = 0
    alphabet_size: int = 10
    n_train: int = 20000
    seen_max: int = 8
    eval_per_length: int = 200
    decay: float = 0.7
    epochs: int = 10
    batch_size: int = 64
    channels: int = 64
    warmup_steps: int = 200
    pat_max_len: int = 12
    grid: str = "nd,nd_fem,ctc,pat"


def build_balanced_corpus(out_dir: str, per_length: int, min_len: int, max_len: int,
                          alphabet: GlyphAlphabet, rng_seed: int) -> None:
    """Evaluation corpus with exactly per_length samples at every length."""
    rng = np.random.default_rng(rng_seed)
    labels = []
    for length in range(min_len, max_len + 1):
        for _ in range(per_length):
            labels.append(rng.integers(0, alphabet.n_symbols, size=length).tolist())
    seeds = rng.integers(0, 2**31 - 1, size=len(labels))
    meta = {"n": len(labels), "seed": rng_seed,
            "dist": {"kind": "balanced-uniform", "min_len": min_len,
                     "max_len": max_len, "per_length": per_length}}
    write_corpus(out_dir, labels, seeds, alphabet, meta)


def ensure_corpora(cfg: ExtrapolationConfig) -> tuple[str, str]:
    train_dir = os.path.join(cfg.workdir, "corpus_train")
    eval_dir = os.path.join(cfg.workdir, "corpus_eval")
    alphabet = GlyphAlphabet.generate(n_symbols=cfg.alphabet_size, master_seed=cfg.seed)
    if not os.path.exists(os.path.join(train_dir, "manifest.tsv")):
        dist = LengthDistribution("longtail", 1, cfg.seen_max, decay=cfg.decay)
        build_corpus(train_dir, cfg.n_train, dist, alphabet, rng_seed=cfg.seed)
    if not os.path.exists(os.path.join(eval_dir, "manifest.tsv")):
        build_balanced_corpus(eval_dir, cfg.eval_per_length, 1, 2 * cfg.seen_max,
                              alphabet, rng_seed=cfg.seed + 1)
    return train_dir, eval_dir


_MODEL_VARIANTS = {
    "nd": {"decoder": "nd", "fem_iters": 1},
    "nd_fem": {"decoder": "nd", "fem_iters": 2},
    "ctc": {"decoder": "ctc"},
    "pat": {"decoder": "pat"},
}


def train_grid(cfg: ExtrapolationConfig, train_dir: str) -> dict[str, str]:
    """Train every requested variant (reusing finished checkpoints)."""
    out = {}
    for name in [v.strip() for v in cfg.grid.split(",") if v.strip()]:
        if name not in _MODEL_VARIANTS:
            raise ValueError(f"unknown grid entry {name!r}")
        ckpt_dir = os.path.join(cfg.workdir, "models", name)
        out[name] = ckpt_dir
        if os.path.exists(os.path.join(ckpt_dir, META_NAME)):
            continue
        tc = TrainConfig(corpus=train_dir, out=ckpt_dir, seed=cfg.seed,
                         batch_size=cfg.batch_size, epochs=cfg.epochs,
                         warmup_steps=cfg.warmup_steps, channels=cfg.channels,
                         pat_max_len=cfg.pat_max_len, **_MODEL_VARIANTS[name])
        train(tc)
    return out


def evaluate_grid(cfg: ExtrapolationConfig, checkpoints: dict[str, str],
                  eval_dir: str) -> list[LengthReport]:
    data = load_corpus(eval_dir)
    reports_dir = os.path.join(cfg.workdir, "reports")
    os.makedirs(reports_dir, exist_ok=True)
    plan = []
    if "nd" in checkpoints:
        plan.append(("nd", "nd", SharpenConfig(enabled=False)))
        plan.append(("nd+as", "nd", SharpenConfig(enabled=True)))
    if "nd_fem" in checkpoints:
        plan.append(("nd+fem+as", "nd_fem", SharpenConfig(enabled=True)))
    if "ctc" in checkpoints:
        plan.append(("ctc", "ctc", None))
    if "pat" in checkpoints:
        plan.append(("pat", "pat", None))

    reports = []
    for report_name, model_name, sharpen in plan:
        model, _ = load_checkpoint(checkpoints[model_name])
        report = evaluate_by_length(model, data, seen_max=cfg.seen_max,
                                    sharpen=sharpen, batch_size=cfg.batch_size,
                                    name=report_name)
        save_report(report, os.path.join(
            reports_dir, report_name.replace("+", "_") + ".csv"))
        reports.append(report)
    return reports


def summarize(cfg: ExtrapolationConfig, reports: list[LengthReport]) -> dict:
    by_name = {r.name: r for r in reports}
    summary: dict = {"config": dataclasses.asdict(cfg),
                     "results": {r.name: r.summary() for r in reports}}
    deltas = {}
    if "nd" in by_name and "nd+as" in by_name:
        deltas["as_unseen_gain"] = (by_name["nd+as"].accuracy("unseen")
                                    - by_name["nd"].accuracy("unseen"))
    if "nd+as" in by_name and "nd+fem+as" in by_name:
        deltas["fem_unseen_vs_as"] = (by_name["nd+fem+as"].accuracy("unseen")
                                      - by_name["nd+as"].accuracy("unseen"))
    if "nd+as" in by_name and "ctc" in by_name:
        deltas["nd_as_seen_minus_ctc_seen"] = (by_name["nd+as"].accuracy("seen")
                                               - by_name["ctc"].accuracy("seen"))
    if "pat" in by_name:
        beyond = [b for b in by_name["pat"].bins if b.length > cfg.pat_max_len]
        deltas["pat_correct_beyond_cap"] = sum(b.correct for b in beyond)
    summary["deltas"] = deltas
    return summary


def run_extrapolation(cfg: ExtrapolationConfig) -> dict:
    if not cfg.workdir:
        raise ValueError("workdir is required")
    os.makedirs(cfg.workdir, exist_ok=True)
    train_dir, eval_dir = ensure_corpora(cfg)
    checkpoints = train_grid(cfg, train_dir)
    reports = evaluate_grid(cfg, checkpoints, eval_dir)
    reports_dir = os.path.join(cfg.workdir, "reports")
    compare_reports(reports, os.path.join(reports_dir, "comparison.csv"),
                    os.path.join(reports_dir, "comparison.png"))
    summary = summarize(cfg, reports)
    with open(os.path.join(cfg.workdir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2)
    return summary
