"""Length-binned word-accuracy evaluation and report handling.

Word accuracy is exact match between predicted and ground-truth symbol
strings; a rollout that never fires the stopping rule counts as wrong.
Reports split into seen (length <= seen_max) and unseen aggregates.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np
import torch

from .data import LoadedCorpus, collate
from .decoder import SharpenConfig


@dataclass
class LengthBin:
    length: int
    count: int
    correct: int

    @property
    def accuracy(self) -> float:
        return self.correct / self.count if self.count else 0.0


@dataclass
class LengthReport:
    name: str
    seen_max: int
    bins: list[LengthBin] = field(default_factory=list)

    def _aggregate(self, keep) -> tuple[int, int]:
        n = sum(b.count for b in self.bins if keep(b.length))
        c = sum(b.correct for b in self.bins if keep(b.length))
        return n, c

    def accuracy(self, which: str = "total") -> float:
        if which == "seen":
            n, c = self._aggregate(lambda l: l <= self.seen_max)
        elif which == "unseen":
            n, c = self._aggregate(lambda l: l > self.seen_max)
        else:
            n, c = self._aggregate(lambda l: True)
        return c / n if n else 0.0

    def bin_for(self, length: int) -> LengthBin:
        for b in self.bins:
            if b.length == length:
                return b
        raise KeyError(f"no bin for length {length}")

    def summary(self) -> dict:
        return {
            "name": self.name,
            "seen_max": self.seen_max,
            "seen": self.accuracy("seen"),
            "unseen": self.accuracy("unseen"),
            "total": self.accuracy("total"),
        }


def save_report(report: LengthReport, csv_path: str) -> None:
    with open(csv_path, "w") as fh:
        fh.write("length,count,correct,accuracy\n")
        for b in sorted(report.bins, key=lambda b: b.length):
            fh.write(f"{b.length},{b.count},{b.correct},{b.accuracy:.6f}\n")
    with open(csv_path + ".summary.json", "w") as fh:
        json.dump(report.summary(), fh, indent=2)


def load_report(csv_path: str, name: str | None = None,
                seen_max: int | None = None) -> LengthReport:
    summary_path = csv_path + ".summary.json"
    if os.path.exists(summary_path):
        with open(summary_path) as fh:
            summary = json.load(fh)
        name = name or summary.get("name", csv_path)
        seen_max = seen_max if seen_max is not None else summary.get("seen_max", 0)
    bins = []
    with open(csv_path) as fh:
        header = fh.readline()
        if not header.startswith("length,"):
            raise ValueError(f"{csv_path}: not a length report")
        for line in fh:
            length, count, correct, _acc = line.strip().split(",")
            bins.append(LengthBin(int(length), int(count), int(correct)))
    return LengthReport(name=name or csv_path, seen_max=seen_max or 0, bins=bins)


def predict_corpus(model, data: LoadedCorpus, sharpen: SharpenConfig | None = None,
                   batch_size: int = 64, max_batch_width: int = 1 << 16,
                   dump_attn: str | None = None) -> tuple[list[list[int]], list[bool]]:
    """Predicted symbol strings (and termination flags) for every sample.

    Samples are batched in width order to limit padding waste; outputs are
    returned in corpus order.
    """
    order = np.argsort([img.shape[1] for img in data.images], kind="stable")
    preds: list[list[int] | None] = [None] * len(data)
    terminated = [True] * len(data)
    if dump_attn:
        os.makedirs(dump_attn, exist_ok=True)
    model.eval()
    with torch.no_grad():
        for start in range(0, len(order), batch_size):
            idxs = order[start:start + batch_size]
            images, widths, _ = collate(data, idxs, preprocess="pad",
                                        max_batch_width=max_batch_width)
            batch_preds, rollout = model.predict(images, widths, cfg=sharpen)
            for row, i in enumerate(idxs):
                preds[i] = batch_preds[row]
                if rollout is not None:
                    terminated[i] = bool(rollout.terminated[row])
                    if dump_attn:
                        n_rows = int(rollout.lengths[row])
                        np.savetxt(os.path.join(dump_attn, f"{i:06d}.txt"),
                                   rollout.maps[row, :n_rows].numpy(), fmt="%.6e")
    return preds, terminated


def evaluate_by_length(model, data: LoadedCorpus, seen_max: int,
                       sharpen: SharpenConfig | None = None, batch_size: int = 64,
                       name: str = "model", dump_attn: str | None = None) -> LengthReport:
    if len(data) == 0:
        raise ValueError("cannot evaluate an empty corpus")
    preds, terminated = predict_corpus(model, data, sharpen=sharpen,
                                       batch_size=batch_size, dump_attn=dump_attn)
    by_length: dict[int, LengthBin] = {}
    for i, label in enumerate(data.labels):
        b = by_length.setdefault(len(label), LengthBin(len(label), 0, 0))
        b.count += 1
        if terminated[i] and preds[i] == label:
            b.correct += 1
    report = LengthReport(name=name, seen_max=seen_max,
                          bins=sorted(by_length.values(), key=lambda b: b.length))
    return report


def compare_reports(reports: list[LengthReport], out_csv: str,
                    out_png: str | None = None) -> None:
    """Merge per-length accuracies into one CSV (and optionally a line plot).

    All reports must cover identical length bins."""
    if not reports:
        raise ValueError("need at least one report")
    base = [b.length for b in sorted(reports[0].bins, key=lambda b: b.length)]
    for rep in reports[1:]:
        lengths = [b.length for b in sorted(rep.bins, key=lambda b: b.length)]
        if lengths != base:
            extra = sorted(set(lengths) ^ set(base))
            raise ValueError(f"reports cover different length bins: {extra}")
    with open(out_csv, "w") as fh:
        fh.write("length," + ",".join(r.name for r in reports) + "\n")
        for length in base:
            accs = ",".join(f"{r.bin_for(length).accuracy:.6f}" for r in reports)
            fh.write(f"{length},{accs}\n")
    if out_png:
        plot_reports(reports, out_png)


def plot_reports(reports: list[LengthReport], out_png: str) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4.2))
    for rep in reports:
        xs = [b.length for b in sorted(rep.bins, key=lambda b: b.length)]
        ys = [rep.bin_for(x).accuracy for x in xs]
        ax.plot(xs, ys, marker="o", markersize=3, label=rep.name)
    if reports and reports[0].seen_max:
        ax.axvline(reports[0].seen_max + 0.5, color="grey", linestyle="--",
                   linewidth=1, label="training length cap")
    ax.set_xlabel("text length")
    ax.set_ylabel("word accuracy")
    ax.set_ylim(-0.02, 1.02)
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_png, dpi=150)
    plt.close(fig)


def padding_invariance_check(model, data: LoadedCorpus, indices,
                             sharpen: SharpenConfig | None = None,
                             batch_size: int = 64) -> int:
    """Count samples whose solo prediction differs from the batched one."""
    solo: dict[int, list[int]] = {}
    model.eval()
    with torch.no_grad():
        for i in indices:
            images, widths, _ = collate(data, [i], preprocess="pad",
                                        max_batch_width=1 << 16)
            preds, _ = model.predict(images, widths, cfg=sharpen)
            solo[i] = preds[0]
        mismatches = 0
        idx_list = list(indices)
        for start in range(0, len(idx_list), batch_size):
            chunk = idx_list[start:start + batch_size]
            images, widths, _ = collate(data, chunk, preprocess="pad",
                                        max_batch_width=1 << 16)
            preds, _ = model.predict(images, widths, cfg=sharpen)
            for row, i in enumerate(chunk):
                if preds[row] != solo[i]:
                    mismatches += 1
    return mismatches
