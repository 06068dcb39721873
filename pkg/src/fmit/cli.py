"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data/validation error, 3 numeric
failure (non-finite loss, failed gradient check).  Settings resolve as
built-in defaults, then ``--config`` file, then command-line flags.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import fields
from pathlib import Path

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _common(p):
    p.add_argument("--seed", type=int, default=None, help="random seed (overrides config)")
    p.add_argument("--config", type=Path, default=None, help="INI config file with [train]/[data] sections")


def _train_flags(p):
    g = p.add_argument_group("training overrides")
    for flag, typ in (("epochs", int), ("batch-size", int), ("max-len", int), ("lr", float),
                      ("dropout", float), ("lam", float), ("d", int), ("heads", int), ("layers", int),
                      ("clip-norm", float)):
        g.add_argument(f"--{flag}", type=typ, default=None)
    g.add_argument("--precision", choices=["float32", "float64"], default=None)
    for flag in ("no-rel", "no-ebd", "no-objects", "no-transitions"):
        g.add_argument(f"--{flag}", action="store_true", default=None, help="ablation switch")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fmit", description="Flat multimodal interaction transformer for multimodal NER")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-data", help="write a synthetic train/dev/test corpus and stats file")
    _common(p)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--ambiguity", type=float, default=None, help="fraction of type-ambiguous entity surfaces")
    p.add_argument("--types", default=None, help="comma-separated entity types, e.g. PER,LOC")
    p.add_argument("--visual-bias", type=float, default=None, help="probability of a decoy object per sample")
    for flag in ("train-size", "dev-size", "test-size"):
        p.add_argument(f"--{flag}", type=int, default=None)

    p = sub.add_parser("train", help="train a model; writes a checkpoint and a per-epoch TSV log")
    _common(p)
    p.add_argument("--data", type=Path, required=True, help="directory with train.jsonl and dev.jsonl")
    p.add_argument("--out", type=Path, required=True, help="checkpoint path")
    p.add_argument("--log", type=Path, default=None, help="metrics log path (default: <out>.log.tsv)")
    _train_flags(p)

    p = sub.add_parser("eval", help="score a checkpoint on a corpus split")
    _common(p)
    p.add_argument("--ckpt", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True, help="corpus directory")
    p.add_argument("--split", choices=["train", "dev", "test"], default="dev")
    p.add_argument("--out", type=Path, default=None, help="also write key=value metrics here")

    p = sub.add_parser("decode", help="label a corpus file; adds pred_labels to each record")
    _common(p)
    p.add_argument("--ckpt", type=Path, required=True)
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("inspect-lattice", help="print the flat lattice of one corpus record")
    _common(p)
    p.add_argument("--input", type=Path, required=True, help="corpus file (JSON lines)")
    p.add_argument("--index", type=int, default=0, help="0-based record index")
    p.add_argument("--distances", action="store_true", help="also dump the head/tail distance matrix")

    p = sub.add_parser("gradcheck", help="finite-difference check of every model parameter (float64)")
    _common(p)
    p.add_argument("--d", type=int, default=16)
    p.add_argument("--layers", type=int, default=1)
    p.add_argument("--heads", type=int, default=2)
    p.add_argument("--lam", type=float, default=0.25)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--max-entries", type=int, default=None, help="entries checked per tensor (default all)")
    return parser


def _sections(args):
    if args.config is None:
        return {"train": {}, "data": {}}
    from .config import load_config
    return load_config(args.config)


def _train_config(args):
    from .config import coerce
    from .trainer import TrainConfig
    values = coerce(TrainConfig, _sections(args)["train"])
    for f in fields(TrainConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    if args.seed is not None:
        values["seed"] = args.seed
    return TrainConfig(**values)


def cmd_gen_data(args):
    from .config import coerce
    from .data import GeneratorSpec, corpus_stats, generate_corpus, write_splits
    values = coerce(GeneratorSpec, _sections(args)["data"])
    for name in ("ambiguity", "visual_bias", "train_size", "dev_size", "test_size"):
        v = getattr(args, name)
        if v is not None:
            values[name] = v
    if args.types is not None:
        values["types"] = tuple(t.strip() for t in args.types.split(",") if t.strip())
    if args.seed is not None:
        values["seed"] = args.seed
    spec = GeneratorSpec(**values)
    splits = generate_corpus(spec)
    write_splits(args.out, splits)
    print(corpus_stats(splits), end="")
    return EXIT_OK


def cmd_train(args):
    from .data import read_split
    from .trainer import save_model, train
    config = _train_config(args)
    result = train(config, read_split(args.data, "train"), read_split(args.data, "dev"))
    save_model(args.out, result.model, result.vocab, config)
    log_path = args.log or Path(str(args.out) + ".log.tsv")
    log_path.write_text(result.log_text(), encoding="utf-8")
    print(result.log_text(), end="")
    print(f"best epoch {result.best_epoch}; checkpoint written to {args.out}")
    return EXIT_OK


def cmd_eval(args):
    from .data import read_split
    from .trainer import evaluate_samples, load_model
    model, vocab, tc = load_model(args.ckpt)
    report = evaluate_samples(model, vocab, read_split(args.data, args.split),
                              use_objects=not (tc and tc.no_objects))
    print(report.to_table())
    if args.out is not None:
        args.out.write_text(report.to_kv(), encoding="utf-8")
    return EXIT_OK


def cmd_decode(args):
    from .trainer import decode_file
    count = decode_file(args.ckpt, args.input, args.out)
    print(f"decoded {count} samples to {args.out}")
    return EXIT_OK


def cmd_inspect(args):
    from .data import Vocab, read_corpus, to_lattice
    from .lattice import render_table
    from .posenc import render_distances
    samples = read_corpus(args.input)
    if not 0 <= args.index < len(samples):
        raise ValueError(f"index {args.index} out of range for {len(samples)} records")
    sample = samples[args.index]
    vocab = Vocab.build([sample])
    lattice = to_lattice(sample, vocab)
    print(render_table(lattice, vocab.words, vocab.concepts))
    if args.distances:
        print()
        print(render_distances(lattice))
    return EXIT_OK


def cmd_gradcheck(args):
    from .gradcheck import grad_check, model_problem
    loss_fn, params = model_problem(d=args.d, layers=args.layers, heads=args.heads, lam=args.lam,
                                    seed=args.seed or 0)
    report = grad_check(loss_fn, params, tolerance=args.tolerance, max_entries=args.max_entries)
    print(report.to_text())
    return EXIT_OK if report.passed else EXIT_NUMERIC


COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "eval": cmd_eval, "decode": cmd_decode,
            "inspect-lattice": cmd_inspect, "gradcheck": cmd_gradcheck}


def main(argv=None) -> int:
    from .checkpoint import CheckpointError
    from .trainer import NumericError
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except (NumericError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, KeyError, OSError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
