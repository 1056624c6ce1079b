"""Command-line harness: train, eval, replay, generate, bayes."""

from __future__ import annotations

import argparse
import sys

from . import evaluation, synthetic
from .corpus import read_corpus, write_corpus
from .errors import DegenerateHeldOutError, DialactError
from .model import load_default_model, read_model
from .planner import load_default_operators, read_operators
from .predictor import Predictor, estimate_weights, read_predictor, train, write_predictor
from .session import replay

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INCONSISTENT = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _ks(text: str) -> tuple[int, ...]:
    try:
        ks = tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad k list {text!r}") from None
    if not ks or min(ks) < 1:
        raise argparse.ArgumentTypeError("k values must be positive integers")
    return ks


def _positive(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def _split(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad split {text!r}") from None
    if not 0 < value < 1:
        raise argparse.ArgumentTypeError("split must lie strictly between 0 and 1")
    return value


def _model(args):
    return read_model(args.model_def) if args.model_def else load_default_model()


def _write(text: str, path: str | None):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def cmd_train(args) -> int:
    inventory, _ = _model(args)
    corpus = read_corpus(args.corpus, inventory)
    train_part, held_out = corpus.split(args.split)
    if not train_part.dialogues or not held_out.dialogues:
        raise UsageError(f"split {args.split} leaves an empty part of {len(corpus)} dialogues")
    tables = train(train_part, inventory, args.skip_speaker)
    try:
        weights = estimate_weights(tables, held_out, args.skip_speaker)
    except DegenerateHeldOutError as exc:
        raise DegenerateHeldOutError(f"{exc}; use a smaller --split or a larger corpus") from None
    write_predictor(Predictor(tables, weights), args.output)
    q = weights.as_tuple()
    print(
        f"trained on {len(train_part)} dialogues, weights estimated on {len(held_out)}: "
        f"q1={q[0]:.6f} q2={q[1]:.6f} q3={q[2]:.6f}",
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_eval(args) -> int:
    inventory, _ = _model(args)
    predictor = read_predictor(args.model, inventory)
    reports = []
    for i, path in enumerate(args.test, 1):
        corpus = read_corpus(path, inventory)
        reports.append(
            evaluation.evaluate(predictor, corpus, args.k, args.skip_initial, f"TS{i}", args.skip_speaker)
        )
    sys.stdout.write(evaluation.format_table(reports))
    if args.totals:
        sys.stdout.write(evaluation.format_totals(reports))
    return EXIT_OK


def cmd_replay(args) -> int:
    inventory, machine = _model(args)
    library = read_operators(args.operators, inventory) if args.operators else load_default_operators(inventory)
    predictor = read_predictor(args.model, inventory) if args.model else None
    corpus = read_corpus(args.corpus, inventory)
    try:
        dialogue = corpus.dialogue(args.dialogue)
    except KeyError:
        raise UsageError(f"no dialogue {args.dialogue!r} in {args.corpus}") from None
    session = replay(dialogue, inventory, machine, library, predictor, args.k)
    sys.stdout.write(session.transcript())
    if args.strict and session.inconsistencies:
        return EXIT_INCONSISTENT
    return EXIT_OK


def cmd_generate(args) -> int:
    source = synthetic.read_source(args.source)
    corpus = synthetic.generate(source, args.count, args.seed, args.terminal)
    _write(write_corpus(corpus), args.output)
    return EXIT_OK


def cmd_bayes(args) -> int:
    source = synthetic.read_source(args.source)
    sample = read_corpus(args.sample)
    report = synthetic.bayes_ceiling(source, sample, args.k, args.skip_initial)
    sys.stdout.write(evaluation.format_table([report]))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dialact", description="Dialogue-act prediction, tracking and plan recognition.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, model_def=True):
        if model_def:
            p.add_argument("--model-def", help="model definition file (default: shipped model)")
        p.add_argument("--skip-speaker", action="append", default=[], metavar="TAG",
                       help="leave this speaker's turns out of act sequences")

    p = sub.add_parser("train", help="count n-grams and estimate interpolation weights")
    p.add_argument("corpus")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--split", type=_split, default=0.9, help="fraction of dialogues used for counting")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="top-k accuracy on one or more test corpora")
    p.add_argument("model")
    p.add_argument("test", nargs="+")
    p.add_argument("--k", type=_ks, default=evaluation.DEFAULT_KS)
    p.add_argument("--skip-initial", action="store_true", help="do not score dialogue-initial acts")
    p.add_argument("--totals", action="store_true", help="also print dialogue and act counts")
    common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("replay", help="run one dialogue through all three layers")
    p.add_argument("corpus")
    p.add_argument("dialogue")
    p.add_argument("--model", help="trained predictor; predictions are omitted without it")
    p.add_argument("--operators", help="plan operator library (default: shipped library)")
    p.add_argument("--k", type=_positive, default=2, help="predictions shown per turn")
    p.add_argument("--strict", action="store_true", help="exit with status 3 on inconsistencies")
    p.add_argument("--model-def")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("generate", help="sample dialogues from a synthetic source")
    p.add_argument("source")
    p.add_argument("--count", type=_positive, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--terminal", default=synthetic.DEFAULT_TERMINAL)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("bayes", help="accuracy ceiling of a source on a sample")
    p.add_argument("source")
    p.add_argument("sample")
    p.add_argument("--k", type=_ks, default=evaluation.DEFAULT_KS)
    p.add_argument("--skip-initial", action="store_true")
    p.set_defaults(func=cmd_bayes)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"dialact: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DialactError, OSError) as exc:
        print(f"dialact: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
