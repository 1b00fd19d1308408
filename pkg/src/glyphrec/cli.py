"""Command-line surface: datagen, train, eval, extrapolate, compare, plot.

Every command exits 0 on success and nonzero with a message on stderr
otherwise.  train/eval/extrapolate read a plain-text key=value config file
(--config) which individual --set key=value flags override.
"""

from __future__ import annotations

import argparse
import json
import sys

from .config import TrainConfig, apply_overrides, load_config
from .corpus import GlyphAlphabet, LengthDistribution, build_corpus
from .extrapolate import ExtrapolationConfig, run_extrapolation


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="KEY=VALUE", help="override one config key")


def _build_train_config(args) -> TrainConfig:
    cfg = TrainConfig()
    if args.config:
        load_config(args.config, cfg)
    apply_overrides(cfg, args.overrides)
    for name in ("corpus", "out", "decoder", "epochs", "seed"):
        value = getattr(args, name, None)
        if value is not None:
            setattr(cfg, name, value)
    return cfg


def cmd_datagen(args) -> int:
    if args.alphabet:
        alphabet = GlyphAlphabet.load(args.alphabet)
    else:
        alphabet = GlyphAlphabet.generate(n_symbols=args.alphabet_size,
                                          master_seed=args.alphabet_seed)
    dist = LengthDistribution(args.dist, args.min_len, args.max_len, decay=args.decay)
    rows = build_corpus(args.out, args.n, dist, alphabet, rng_seed=args.seed)
    print(f"wrote {len(rows)} samples to {args.out}")
    return 0


def cmd_train(args) -> int:
    from .train import train
    cfg = _build_train_config(args)
    if not cfg.corpus or not cfg.out:
        raise ValueError("train needs --corpus and --out")
    ckpt = train(cfg)
    print(f"checkpoint written to {ckpt}")
    return 0


def cmd_eval(args) -> int:
    from .checkpoint import load_checkpoint
    from .data import load_corpus
    from .decoder import SharpenConfig
    from .evaluate import evaluate_by_length, save_report

    model, meta = load_checkpoint(args.ckpt)
    data = load_corpus(args.corpus)
    sharpen = None
    if meta["decoder"] == "nd":
        sharpen = SharpenConfig(enabled=(args.sharpen == "on"))
    report = evaluate_by_length(model, data, seen_max=args.seen_max,
                                sharpen=sharpen, batch_size=args.batch_size,
                                name=args.name or meta["decoder"],
                                dump_attn=args.dump_attn)
    save_report(report, args.out)
    print(json.dumps(report.summary(), indent=2))
    return 0


def cmd_extrapolate(args) -> int:
    cfg = ExtrapolationConfig(workdir=args.workdir)
    if args.config:
        load_config(args.config, cfg)
    apply_overrides(cfg, args.overrides)
    cfg.workdir = args.workdir
    summary = run_extrapolation(cfg)
    print(json.dumps(summary["results"], indent=2))
    print(json.dumps(summary["deltas"], indent=2))
    return 0


def _load_named_reports(paths, names):
    from .evaluate import load_report
    labels = names.split(",") if names else [None] * len(paths)
    if len(labels) != len(paths):
        raise ValueError("--names must list one name per report")
    return [load_report(p, name=n) for p, n in zip(paths, labels)]


def cmd_compare(args) -> int:
    from .evaluate import compare_reports
    reports = _load_named_reports(args.reports, args.names)
    compare_reports(reports, args.out, args.plot)
    print(f"comparison written to {args.out}")
    return 0


def cmd_plot(args) -> int:
    from .evaluate import plot_reports
    reports = _load_named_reports(args.reports, args.names)
    plot_reports(reports, args.out)
    print(f"plot written to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="glyphrec")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("datagen", help="generate a synthetic glyph-string corpus")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--dist", choices=["longtail", "uniform"], required=True)
    p.add_argument("--min-len", type=int, required=True)
    p.add_argument("--max-len", type=int, required=True)
    p.add_argument("--alphabet-size", type=int, default=10)
    p.add_argument("--alphabet-seed", type=int, default=0)
    p.add_argument("--alphabet", help="reuse an existing alphabet.json")
    p.add_argument("--decay", type=float, default=0.7)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_datagen)

    p = sub.add_parser("train", help="train one decoder on a corpus")
    _add_config_flags(p)
    p.add_argument("--corpus")
    p.add_argument("--out")
    p.add_argument("--decoder", choices=["nd", "ctc", "pat"])
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="length-binned evaluation of a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True, help="report CSV path")
    p.add_argument("--seen-max", type=int, required=True)
    p.add_argument("--sharpen", choices=["on", "off"], default="on")
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--name", help="report label used in comparisons")
    p.add_argument("--dump-attn", metavar="DIR",
                   help="write per-sample attention rollouts as text files")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("extrapolate", help="run the length-extrapolation grid")
    _add_config_flags(p)
    p.add_argument("--workdir", required=True)
    p.set_defaults(func=cmd_extrapolate)

    p = sub.add_parser("compare", help="merge reports into a CSV and plot")
    p.add_argument("reports", nargs="+")
    p.add_argument("--out", required=True)
    p.add_argument("--plot")
    p.add_argument("--names")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("plot", help="accuracy-over-length curves")
    p.add_argument("reports", nargs="+")
    p.add_argument("--out", required=True)
    p.add_argument("--names")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # CLI boundary: report and signal failure
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
