"""``glossnmt`` command-line entry point.

Exit status: 0 on success, 2 on usage or configuration errors, 1 when a
command fails at run time.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

from . import __version__
from .augmentation import DEFAULT_TAU_C, DEFAULT_TAU_R, DEFAULT_THETA, augment, gap_statistics
from .config import SCHEMA, load_config_file, printable, resolve, train_config
from .corpus import detokenize, load_prefix, save_parallel, tokenize
from .errors import ConfigError, GlossNMTError
from .experiments import SWEEP_PARAMS, ablate, sweep, sweep_csv
from .instruction import SCHEDULES, AlphaStrategy, alpha_value
from .metrics import EvalResult, evaluate
from .synthetic import generate_synthetic, generate_text, split
from .teacher import TeacherModel, pretrain_teacher, teacher_config
from .training import train, translate_corpus
from .weights import load_weights, save_weights


class UsageError(Exception):
    pass


# -- small I/O helpers -------------------------------------------------------------

def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, obj, args=None) -> None:
    if args is not None and not getattr(args, "no_timestamp", True):
        obj = {**obj, "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S")}
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _read_lines(path) -> list[tuple[str, ...]]:
    return [tokenize(line) for line in Path(path).read_text(encoding="utf-8").splitlines()]


def _echo(title: str, obj) -> None:
    print(f"{title}:")
    print(json.dumps(obj, indent=2, sort_keys=True))


def _load_teacher(path) -> TeacherModel | None:
    if path is None:
        return None
    teacher = load_weights(path)
    if not isinstance(teacher, TeacherModel):
        raise UsageError(f"{path} does not hold a teacher")
    return teacher


def _settings(args) -> dict:
    file_values = load_config_file(args.config) if args.config else {}
    overrides = {k: getattr(args, k, None) for k in SCHEMA}
    overrides["seed"] = args.seed
    return resolve(file_values, overrides)


# -- commands ----------------------------------------------------------------------

def cmd_gen_corpus(args) -> None:
    sizes = [int(x) for x in args.splits.split(",")]
    corpus = generate_synthetic(sum(sizes), args.gloss_vocab, args.text_vocab, args.drop_prob,
                                seed=args.seed)
    out = _out_dir(args)
    parts = split(corpus, sizes)
    names = ("train", "dev", "test")[: len(parts)]
    for name, part in zip(names, parts):
        save_parallel(part, out / name)
    lm = generate_text(args.n_text, args.gloss_vocab, args.text_vocab, args.drop_prob,
                       seed=args.seed + 1)
    (out / "lm.text").write_text("".join(detokenize(s) + "\n" for s in lm), encoding="utf-8")
    report = {"splits": dict(zip(names, sizes)), "lm_sentences": args.n_text,
              "gloss_vocab": args.gloss_vocab, "text_vocab": args.text_vocab,
              "drop_prob": args.drop_prob, "seed": args.seed}
    _write_json(out / "corpus.json", report, args)
    print(f"wrote {', '.join(names)} splits and lm.text to {out}")


def cmd_augment(args) -> None:
    corpus = load_prefix(args.input)
    theta = tuple(float(x) for x in args.theta.split(","))
    augmented, report = augment(corpus, theta, args.tau_r, args.tau_c, seed=args.seed)
    prefix = Path(args.input)
    out = Path(args.out) if args.out else prefix.parent
    out.mkdir(parents=True, exist_ok=True)
    save_parallel(augmented, out / f"{prefix.name}.aug")
    _write_json(out / f"{prefix.name}.aug.json", report.to_dict(), args)
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True))


def cmd_pretrain(args) -> None:
    sentences = [s for s in _read_lines(args.text) if s]
    vocab_size = len({t.casefold() for s in sentences for t in s}) + 4
    cfg = teacher_config(vocab_size, d_model=args.d_model, d_ff=args.d_ff, n_heads=args.n_heads,
                         n_enc_layers=args.n_layers)
    teacher = pretrain_teacher(sentences, cfg, args.mask_prob, args.epochs, args.seed, args.lr)
    out = _out_dir(args)
    save_weights(teacher, out / "teacher.gnmw")
    report = {"accuracy": teacher.accuracy, "chance": 1.0 / len(teacher.vocab),
              "vocab_size": len(teacher.vocab), "epochs": args.epochs, "seed": args.seed,
              "weight_hash": teacher.weight_hash()}
    _write_json(out / "teacher.json", report, args)
    print(f"teacher masked-token accuracy {teacher.accuracy:.4f} "
          f"(chance {report['chance']:.4f}); saved to {out / 'teacher.gnmw'}")


def cmd_train(args) -> None:
    settings = _settings(args)
    _echo("effective config", printable(settings))
    cfg = train_config(settings)
    teacher = _load_teacher(args.teacher)
    if cfg.instruction is not None and teacher is None:
        raise UsageError("--instruction needs --teacher")
    train_c = load_prefix(args.train)
    dev_c = load_prefix(args.dev) if args.dev else None
    model, tlog = train(train_c, dev_c, teacher, cfg)
    out = _out_dir(args)
    save_weights(model, out / "model.gnmw")
    tlog.to_csv(out / "train_log.csv")
    _write_json(out / "train.json", {"config": printable(settings), **tlog.summary()}, args)
    if not args.no_plot:
        from .plotting import plot_train_log
        plot_train_log(tlog, out / "train_log.png")
    print(f"trained {len(tlog.records)} epochs; best dev BLEU-4 {tlog.best_bleu4} "
          f"at epoch {tlog.best_epoch}; outputs in {out}")


def cmd_translate(args) -> None:
    model = load_weights(args.model)
    if isinstance(model, TeacherModel):
        raise UsageError(f"{args.model} holds a teacher, not a translation model")
    teacher = _load_teacher(args.teacher)
    if model.uses_instruction and teacher is None:
        raise UsageError("this model fuses teacher features; pass --teacher")
    glosses = _read_lines(args.input)
    if any(not g for g in glosses):
        raise GlossNMTError(f"{args.input}: empty line")
    hyps = translate_corpus(model, glosses, teacher, args.beam_size)
    text = "".join(detokenize(h) + "\n" for h in hyps)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
        print(f"wrote {len(hyps)} translations to {args.output}")
    else:
        sys.stdout.write(text)


def cmd_evaluate(args) -> None:
    hyps, refs = _read_lines(args.hyp), _read_lines(args.ref)
    result = evaluate(hyps, refs).to_dict()
    print(json.dumps(result, indent=2, sort_keys=True))
    if args.out:
        _write_json(Path(args.out), result, args)
    if args.csv:
        with open(args.csv, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(EvalResult.COLUMNS)
            w.writerow([repr(result[c]) for c in EvalResult.COLUMNS])


def cmd_ablate(args) -> None:
    settings = _settings(args)
    _echo("effective config", printable(settings))
    cfg = train_config(settings)
    teacher = _load_teacher(args.teacher)
    if teacher is None:
        raise UsageError("ablate needs --teacher")
    seeds = [int(s) for s in args.seeds.split(",")]
    table = ablate(load_prefix(args.train), load_prefix(args.dev), teacher, cfg, seeds)
    out = _out_dir(args)
    (out / "ablation.csv").write_text(table.to_csv(), encoding="utf-8")
    (out / "ablation_summary.csv").write_text(table.summary_csv(), encoding="utf-8")
    if not args.no_plot:
        from .plotting import plot_ablation
        plot_ablation(table.summary(), out / "ablation.png")
    print(table.summary_csv(), end="")


def cmd_sweep(args) -> None:
    settings = _settings(args)
    _echo("effective config", printable(settings))
    cfg = train_config(settings)
    teacher = _load_teacher(args.teacher)
    if cfg.instruction is not None and teacher is None:
        raise UsageError("--instruction needs --teacher")
    model = None
    if args.model:
        if args.param != "beam_size":
            raise UsageError("--model only applies to a beam_size sweep")
        model = load_weights(args.model)
    values = [v for v in args.values.split(",") if v.strip()]
    rows = sweep(args.param, values, load_prefix(args.train), load_prefix(args.dev), teacher,
                 cfg, model=model)
    out = _out_dir(args)
    (out / f"sweep_{args.param}.csv").write_text(sweep_csv(rows), encoding="utf-8")
    if not args.no_plot:
        from .plotting import plot_sweep
        plot_sweep(rows, out / f"sweep_{args.param}.png")
    print(sweep_csv(rows), end="")


def cmd_inspect_alpha(args) -> None:
    if args.log:
        with open(args.log, encoding="utf-8") as fh:
            rows = [{"epoch": int(r["epoch"]),
                     "alpha_enc": float(r["alpha_enc"]) if r["alpha_enc"] else None,
                     "alpha_dec": float(r["alpha_dec"]) if r["alpha_dec"] else None}
                    for r in csv.DictReader(fh)]
    else:
        strategy = AlphaStrategy(variant=args.alpha_strategy, value=args.alpha_value,
                                 T_c=args.alpha_t_c, gamma=args.alpha_gamma,
                                 alpha_min=args.alpha_min, alpha_max=args.alpha_max)
        rows = [{"epoch": e, "alpha": alpha_value(strategy, e)} for e in range(args.epochs + 1)]
    header = list(rows[0]) if rows else ["epoch", "alpha"]
    lines = [",".join(header)]
    for r in rows:
        lines.append(",".join("" if r[k] is None else repr(r[k]) if isinstance(r[k], float)
                              else str(r[k]) for k in header))
    text = "\n".join(lines) + "\n"
    out = _out_dir(args)
    (out / "alpha.csv").write_text(text, encoding="utf-8")
    if not args.no_plot and rows:
        from .plotting import plot_alpha
        plot_alpha(rows, out / "alpha.png")
    sys.stdout.write(text)


def cmd_stats(args) -> None:
    corpus = load_prefix(args.input)
    theta = tuple(float(x) for x in args.theta.split(","))
    stats = gap_statistics(corpus, args.tau_r, args.tau_c, theta)
    print(json.dumps(stats, indent=2, sort_keys=True))
    if args.out:
        _write_json(Path(args.out), stats, args)


# -- parser ------------------------------------------------------------------------

def _add_common(p, out_default: str | None = "out", seed_default: int | None = 0) -> None:
    p.add_argument("--seed", type=int, default=seed_default,
                   help="random seed" + (" (default: config file, else 0)" if seed_default is None
                                         else ""))
    if out_default is not None:
        p.add_argument("--out", default=out_default, help="output directory")
    p.add_argument("--no-timestamp", action="store_true",
                   help="omit the timestamp field from JSON reports")


def _add_config_flags(p) -> None:
    p.add_argument("--config", help="YAML/JSON config file (flags override it)")
    g = p.add_argument_group("config keys (defaults apply when neither flag nor file sets them)")
    for key, spec in SCHEMA.items():
        flag = "--" + key.replace("_", "-")
        default = list(spec.default) if isinstance(spec.default, tuple) else spec.default
        help_ = f"{spec.help} (default: {default})"
        if spec.kind.__name__ == "_bool":
            g.add_argument(flag, dest=key, action=argparse.BooleanOptionalAction, default=None,
                           help=help_)
        else:
            g.add_argument(flag, dest=key, default=None, choices=spec.choices, help=help_)
    p.add_argument("--no-plot", action="store_true", help="skip PNG figures")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="glossnmt", formatter_class=fmt,
                                     description="Gloss-to-text translation toolkit.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-corpus", help="write a synthetic gloss/text corpus", formatter_class=fmt)
    p.add_argument("--splits", default="500,100,100", help="train,dev,test sizes")
    p.add_argument("--gloss-vocab", type=int, default=40, help="gloss inventory size")
    p.add_argument("--text-vocab", type=int, default=120, help="text vocabulary size")
    p.add_argument("--drop-prob", type=float, default=0.3, help="function-word drop probability")
    p.add_argument("--n-text", type=int, default=2000, help="sentences in lm.text for the teacher")
    _add_common(p)
    p.set_defaults(func=cmd_gen_corpus)

    p = sub.add_parser("augment", help="append text-to-text pairs", formatter_class=fmt)
    p.add_argument("--in", dest="input", required=True, help="corpus prefix (PREFIX.gloss/.text)")
    p.add_argument("--theta", default=",".join(map(str, DEFAULT_THETA)), help="factor weights")
    p.add_argument("--tau-r", type=float, default=DEFAULT_TAU_R, help="rare-gloss threshold")
    p.add_argument("--tau-c", type=float, default=DEFAULT_TAU_C, help="cover-ratio threshold")
    _add_common(p, out_default=None)
    p.add_argument("--out", default=None, help="output directory (default: next to the input)")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("pretrain", help="pre-train the teacher encoder", formatter_class=fmt)
    p.add_argument("--text", required=True, help="plain-text corpus, one sentence per line")
    p.add_argument("--epochs", type=int, default=30, help="training epochs")
    p.add_argument("--mask-prob", type=float, default=0.15, help="masking probability")
    p.add_argument("--lr", type=float, default=1e-3, help="peak learning rate")
    p.add_argument("--d-model", type=int, default=64, help="teacher width")
    p.add_argument("--d-ff", type=int, default=128, help="teacher feed-forward width")
    p.add_argument("--n-heads", type=int, default=4, help="teacher attention heads")
    p.add_argument("--n-layers", type=int, default=2, help="teacher layers")
    _add_common(p)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("train", help="train a translation model", formatter_class=fmt)
    p.add_argument("--train", required=True, help="training corpus prefix")
    p.add_argument("--dev", help="dev corpus prefix (early stopping)")
    p.add_argument("--teacher", help="teacher weights (needed with --instruction)")
    _add_common(p, seed_default=None)
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("translate", help="translate a gloss file", formatter_class=fmt)
    p.add_argument("--model", required=True, help="translation model weights")
    p.add_argument("--teacher", help="teacher weights (for instruction models)")
    p.add_argument("--in", dest="input", required=True, help="gloss file, one sentence per line")
    p.add_argument("--output", help="write translations here instead of stdout")
    p.add_argument("--beam-size", type=int, default=5, help="beam width")
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser("evaluate", help="score hypotheses against references", formatter_class=fmt)
    p.add_argument("--hyp", required=True, help="hypothesis file")
    p.add_argument("--ref", required=True, help="reference file")
    p.add_argument("--csv", help="also write a one-row CSV here")
    p.add_argument("--out", help="also write the JSON report here")
    p.add_argument("--no-timestamp", action="store_true", help="omit the timestamp field")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="run the five-row ablation", formatter_class=fmt)
    p.add_argument("--train", required=True, help="training corpus prefix")
    p.add_argument("--dev", required=True, help="dev corpus prefix")
    p.add_argument("--teacher", required=True, help="teacher weights")
    p.add_argument("--seeds", default="0,1,2,3,4", help="comma-separated seeds")
    _add_common(p, seed_default=None)
    _add_config_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("sweep", help="dev BLEU-4 over one hyper-parameter", formatter_class=fmt)
    p.add_argument("--param", required=True, choices=SWEEP_PARAMS, help="parameter to vary")
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--train", required=True, help="training corpus prefix")
    p.add_argument("--dev", required=True, help="dev corpus prefix")
    p.add_argument("--teacher", help="teacher weights")
    p.add_argument("--model", help="trained model for a decode-only beam_size sweep")
    _add_common(p, seed_default=None)
    _add_config_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("inspect-alpha", help="alpha trajectory as CSV", formatter_class=fmt)
    p.add_argument("--log", help="read alpha columns from a train_log.csv instead")
    p.add_argument("--alpha-strategy", default="cosine_annealing", choices=SCHEDULES,
                   help="schedule to tabulate")
    p.add_argument("--alpha-value", type=float, default=0.65, help="constant or initial alpha")
    p.add_argument("--alpha-t-c", type=float, default=None, help="cycle length (schedule default)")
    p.add_argument("--alpha-gamma", type=float, default=None, help="phase shift (schedule default)")
    p.add_argument("--alpha-min", type=float, default=0.0, help="lower bound")
    p.add_argument("--alpha-max", type=float, default=1.0, help="upper bound")
    p.add_argument("--epochs", type=int, default=100, help="last epoch to tabulate")
    p.add_argument("--no-plot", action="store_true", help="skip the PNG figure")
    _add_common(p)
    p.set_defaults(func=cmd_inspect_alpha)

    p = sub.add_parser("stats", help="gloss/text gap factors of a corpus", formatter_class=fmt)
    p.add_argument("--in", dest="input", required=True, help="corpus prefix")
    p.add_argument("--theta", default=",".join(map(str, DEFAULT_THETA)), help="factor weights")
    p.add_argument("--tau-r", type=float, default=DEFAULT_TAU_R, help="rare-gloss threshold")
    p.add_argument("--tau-c", type=float, default=DEFAULT_TAU_C, help="cover-ratio threshold")
    p.add_argument("--out", help="also write the JSON report here")
    p.add_argument("--no-timestamp", action="store_true", help="omit the timestamp field")
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits 2 on usage errors
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"glossnmt {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (GlossNMTError, OSError, ValueError) as exc:
        print(f"glossnmt {args.command}: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
