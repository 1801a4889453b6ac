"""Command-line entry point: ``breathcue <subcommand> ...``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
Subcommands that take a run configuration accept ``--config FILE`` plus any
number of ``--key value`` overrides of its keys.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .errors import ConfigError, InputError, NumericError, StateError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

log = logging.getLogger("breathcue")


def _out(text):
    sys.stdout.write(text if text.endswith("\n") else text + "\n")
    sys.stdout.flush()


def _config(args, extra):
    from .config import build_config

    return build_config(args.config, extra)


def cmd_synth(args, extra):
    from .synth import CorpusSpec, generate_corpus

    if extra:
        raise ConfigError(f"unexpected arguments: {' '.join(extra)}")
    spec = CorpusSpec(
        counts={
            "train": {"bonafide": args.train_bonafide, "spoof": args.train_spoof},
            "eval": {"bonafide": args.eval_bonafide, "spoof": args.eval_spoof},
        },
        duration=args.duration,
        seed=args.seed,
    )
    records = generate_corpus(spec, args.out, breath_source=args.breath_source)
    for split in sorted(records):
        _out(f"{split}: {len(records[split])} utterances -> {Path(args.out) / split}")
    return EXIT_OK


def cmd_train(args, extra):
    from .config import dump_config
    from .harness import train

    cfg = _config(args, extra)
    if not cfg.train_dir:
        raise ConfigError("train_dir is not set")
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.json").write_text(dump_config(cfg), encoding="utf-8")
    result = train(cfg, out_dir=out_dir, progress=_out)
    with open(out_dir / "train_log.tsv", "w", encoding="utf-8", newline="\n") as f:
        f.write("epoch\tloss\n")
        f.writelines(f"{i}\t{v:.6f}\n" for i, v in enumerate(result.history, 1))
    if result.final_path is None:
        _out("max_epochs is 0: nothing trained, no checkpoint written")
    else:
        why = "early stop" if result.stopped_early else "epoch budget"
        _out(f"stopped after {len(result.history)} epochs ({why}); averaged model: {result.final_path}")
    return EXIT_OK


def _modes(mode):
    from .breathmask import MASK_MODES

    if mode == "all":
        return list(MASK_MODES)
    if mode not in MASK_MODES:
        raise ConfigError(f"mask mode must be one of {MASK_MODES} or 'all', got {mode!r}")
    return [mode]


def cmd_eval(args, extra):
    from . import checkpoint as ckpt_io
    from .harness import evaluate
    from .metrics import breakdown_json

    cfg = _config(args, extra)
    data = args.data or cfg.eval_dir
    if not data:
        raise ConfigError("no evaluation data: pass --data or set eval_dir")
    ck = ckpt_io.load(args.checkpoint)
    out_dir = Path(args.out or cfg.out_dir)
    for mode in _modes(args.mask_mode or cfg.mask_mode):
        result = evaluate(ck, data, mode, out_dir / f"scores_{mode}.tsv", cfg=cfg)
        (out_dir / f"report_{mode}.txt").write_text(result.report, encoding="utf-8")
        (out_dir / f"breakdown_{mode}.json").write_text(breakdown_json(result.breakdown), encoding="utf-8")
        _out(result.report)
    return EXIT_OK


def cmd_ablate(args, extra):
    from .harness import ablate, format_ablation
    from .model import VARIANTS

    cfg = _config(args, extra)
    variants = args.variants.split(",") if args.variants else list(VARIANTS)
    unknown = [v for v in variants if v not in VARIANTS]
    if unknown:
        raise ConfigError(f"unknown variants: {', '.join(unknown)}")
    try:
        seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else [cfg.seed]
    except ValueError:
        raise ConfigError(f"--seeds must be comma-separated integers, got {args.seeds!r}") from None
    rows = ablate(cfg, variants, seeds, progress=_out)
    table = format_ablation(rows)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "ablation.txt").write_text(table, encoding="utf-8")
    payload = {r.variant: {"eer_all": r.eer_all, "eer_breath": r.eer_breath, "eer_spectral": r.eer_spectral}
               for r in rows}
    (out_dir / "ablation.json").write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    _out(table)
    return EXIT_OK


def cmd_export(args, extra):
    from . import checkpoint as ckpt_io
    from .harness import export_embeddings

    cfg = _config(args, extra)
    data = args.data or cfg.eval_dir
    if not data:
        raise ConfigError("no data: pass --data or set eval_dir")
    n = export_embeddings(ckpt_io.load(args.checkpoint), data, args.out, args.mask_mode or cfg.mask_mode)
    _out(f"wrote {n} embeddings to {args.out}")
    return EXIT_OK


def cmd_score(args, extra):
    from .metrics import breakdown_json, format_breakdown, format_report, pooled_breakdown, read_scores, summary

    if extra:
        raise ConfigError(f"unexpected arguments: {' '.join(extra)}")
    records = read_scores(args.scores)
    stats = summary(records, args.c_miss, args.c_fa, args.prior)
    table = pooled_breakdown(records, shared_label="bonafide" if args.shared_bonafide else None)
    _out(format_report(stats, title=str(args.scores)) + format_breakdown(table))
    if args.json:
        Path(args.json).write_text(breakdown_json(table), encoding="utf-8")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="breathcue", description="Breath-aware audio deepfake detection toolkit.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress and warnings")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic corpus")
    s.add_argument("--out", required=True)
    s.add_argument("--train-bonafide", type=int, default=800)
    s.add_argument("--train-spoof", type=int, default=1200)
    s.add_argument("--eval-bonafide", type=int, default=200)
    s.add_argument("--eval-spoof", type=int, default=300)
    s.add_argument("--duration", type=float, default=64600 / 16000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--breath-source", choices=("planted", "heuristic"), default="planted")
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", help="train a model (config keys as --key value)")
    t.add_argument("--config")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="score a split with a checkpoint")
    e.add_argument("--config")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", help="split directory (defaults to eval_dir)")
    e.add_argument("--mask-mode", dest="mask_mode", help="normal, zeros, ones or all")
    e.add_argument("--out", help="output directory (defaults to out_dir)")
    e.set_defaults(func=cmd_eval)

    a = sub.add_parser("ablate", help="train and compare ablation variants")
    a.add_argument("--config")
    a.add_argument("--variants", help="comma-separated subset (default: all seven)")
    a.add_argument("--seeds", help="comma-separated seeds (default: config seed)")
    a.set_defaults(func=cmd_ablate)

    x = sub.add_parser("export-emb", help="write per-utterance embeddings")
    x.add_argument("--config")
    x.add_argument("--checkpoint", required=True)
    x.add_argument("--data")
    x.add_argument("--out", required=True)
    x.add_argument("--mask-mode", dest="mask_mode")
    x.set_defaults(func=cmd_export)

    m = sub.add_parser("score", help="metrics for an existing score file")
    m.add_argument("scores")
    m.add_argument("--c-miss", type=float, default=1.0)
    m.add_argument("--c-fa", type=float, default=10.0)
    m.add_argument("--prior", type=float, default=0.05)
    m.add_argument("--shared-bonafide", action="store_true",
                   help="pool untagged bona fide trials into every condition cell")
    m.add_argument("--json", help="also write the breakdown as JSON")
    m.set_defaults(func=cmd_score)
    return p


def main(argv=None):
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args, extra)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InputError, StateError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
