"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from collections import Counter
from dataclasses import replace
from pathlib import Path

from . import corpus
from .harness import (
    DEFAULT_CONTEXT_LENS,
    VARIANTS,
    BackendUnavailable,
    EvalTask,
    make_tasks,
    read_journal,
    read_tasks,
    render_report,
    run_eval,
    score_results,
    write_tasks,
)
from .lse import LseConfig, LseRejected, apply_lse, derive_seed
from .modeling.backends import GenerationConfig, backend_from_spec
from .modeling.ngram import train_ngram
from .syntax import ParseFailure, token_texts

log = logging.getLogger("hpclm")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _range(text: str) -> tuple[int, int]:
    lo, sep, hi = text.partition(":")
    try:
        rng = (int(lo), int(hi))
    except ValueError:
        rng = None
    if not sep or rng is None or rng[0] > rng[1]:
        raise argparse.ArgumentTypeError(f"expected LO:HI with LO <= HI, got {text!r}")
    return rng


# --------------------------------------------------------------------------- commands


def cmd_prep(args):
    langs = [l for l in args.lang.split(",") if l]
    result = corpus.prepare_corpus(
        args.inp, langs, args.min_tokens, args.max_bytes, args.seed, args.ratios, args.workers
    )
    written = corpus.save_prep(result, args.out)
    m = result.manifest
    print(m.table())
    print(
        f"extracted {m.extracted}, accepted {m.accepted}, too small {m.rejected_too_small}, "
        f"too large {m.rejected_too_large}, duplicates {m.rejected_duplicates}, parse {m.rejected_parse}"
    )
    for name, paths in written.items():
        print(f"{name}: {len(result.splits[name])} records -> {', '.join(str(p) for p in paths)}")


def cmd_lse(args):
    cfg = LseConfig(suffix_range=args.range, seed=args.seed, compilable_mode=args.compilable)
    records = corpus.read_records(args.inp)
    failed = 0
    for rec in records:
        try:
            rec.lse_code = apply_lse(rec.code, rec.language, replace(cfg, seed=derive_seed(args.seed, rec.id)))
        except (LseRejected, ParseFailure) as exc:
            failed += 1
            log.warning("%s: %s", rec.id, exc)
    corpus.write_records(args.out, records)
    print(f"wrote {len(records)} records to {args.out} ({failed} left without lse_code)")


def cmd_partition(args):
    records = corpus.read_records(args.inp)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        general, openmp = corpus.partition_openmp(records, args.cap, args.seed)
    for w in caught:
        log.warning("%s", w.message)
    corpus.write_records(args.general, general)
    corpus.write_records(args.openmp, openmp)
    print(f"general: {len(general)} -> {args.general}; openmp: {len(openmp)} -> {args.openmp}")


def _tasks_from_records(path, args) -> list[EvalTask]:
    records = corpus.read_records(path)
    counters = Counter()
    tasks = make_tasks(
        records,
        args.context_lens,
        args.variants,
        LseConfig(seed=args.lse_seed),
        dataset=args.dataset,
        counters=counters,
    )
    log.info("tasks: %s", dict(counters))
    return tasks


def _load_tasks(path, args) -> list[EvalTask]:
    with open(path, encoding="utf-8") as fh:
        first = next((line for line in fh if line.strip()), "")
    if first and "code" in json.loads(first):
        return _tasks_from_records(path, args)
    return read_tasks(path)


def cmd_tasks(args):
    tasks = _tasks_from_records(args.inp, args)
    write_tasks(args.out, tasks)
    print(f"wrote {len(tasks)} tasks to {args.out}")


def cmd_eval_run(args):
    tasks = _load_tasks(args.tasks, args)
    try:
        backend = backend_from_spec(
            args.backend,
            **({"model": args.model, "attempts": args.attempts, "timeout": args.timeout} if args.backend.startswith("http:") else {}),
        )
    except ValueError as exc:
        raise UsageError(str(exc))
    config = GenerationConfig(args.max_new_tokens, args.temperature, args.seed)
    with backend:
        results = run_eval(tasks, backend, config, args.out, args.batch_size, args.in_flight)
    errors = sum(1 for r in results if r.error)
    print(f"{len(results)} tasks, {errors} errors, journal {args.out}")


def cmd_eval_score(args):
    results = read_journal(args.journal)
    if not results:
        raise RuntimeError(f"no entries in journal {args.journal}")
    weights = tuple(args.weights)
    report = score_results(results, weights, {"journal": str(args.journal)})
    text = render_report(report, args.format)
    Path(args.report).parent.mkdir(parents=True, exist_ok=True)
    Path(args.report).write_text(text, encoding="utf-8")
    print(render_report(report, "markdown"), end="")


def cmd_train_baseline(args):
    records = corpus.read_records(*args.inp)
    model = train_ngram(
        (token_texts(r.code, r.language) for r in records),
        order=args.order,
        smoothing_k=args.smoothing_k,
        backoff_factor=args.backoff,
        seed=args.seed,
    )
    model.save(args.out)
    print(f"trained order-{args.order} model on {len(records)} records, vocab {model.vocab_size} -> {args.out}")


# --------------------------------------------------------------------------- parser


def _add_task_options(p):
    p.add_argument("--dataset", default="general", help="dataset label when building tasks from records")
    p.add_argument("--context-lens", type=_int_list, default=list(DEFAULT_CONTEXT_LENS))
    p.add_argument("--variants", type=lambda s: [v for v in s.split(",") if v], default=list(VARIANTS))
    p.add_argument("--lse-seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hpclm", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("prep", help="extract, dedup, filter and split a source tree")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--lang", default="c,cpp")
    p.add_argument("--min-tokens", type=int, default=corpus.MIN_TOKENS)
    p.add_argument("--max-bytes", type=int, default=corpus.MAX_BYTES)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ratios", type=_float_list, default=list(corpus.DEFAULT_RATIOS))
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_prep)

    p = sub.add_parser("lse", help="add anonymized code to a record file")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--range", type=_range, default=(1, 1000))
    p.add_argument("--compilable", action="store_true", help="rename identifiers only")
    p.set_defaults(func=cmd_lse)

    p = sub.add_parser("partition", help="build the General and OpenMP sets")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--general", required=True)
    p.add_argument("--openmp", required=True)
    p.add_argument("--cap", type=int, default=20_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("tasks", help="build context-split tasks from a record file")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    _add_task_options(p)
    p.set_defaults(func=cmd_tasks)

    p = sub.add_parser("eval", help="run or score an evaluation")
    esub = p.add_subparsers(dest="eval_command", required=True, parser_class=_Parser)
    r = esub.add_parser("run", help="complete tasks with a backend")
    r.add_argument("--tasks", required=True, help="task file, or a record file to split on the fly")
    r.add_argument("--backend", required=True, help="oracle | ngram:<file> | http:<url> | subprocess:<cmd>")
    r.add_argument("--out", required=True, help="journal path (appended to, resumable)")
    r.add_argument("--max-new-tokens", type=int, default=None)
    r.add_argument("--temperature", type=float, default=0.0)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--batch-size", type=int, default=16)
    r.add_argument("--in-flight", type=int, default=None)
    r.add_argument("--model", default="default", help="model name sent to an http backend")
    r.add_argument("--attempts", type=int, default=3)
    r.add_argument("--timeout", type=float, default=60.0)
    _add_task_options(r)
    r.set_defaults(func=cmd_eval_run)
    s = esub.add_parser("score", help="score a journal into a report")
    s.add_argument("--journal", required=True)
    s.add_argument("--report", required=True)
    s.add_argument("--format", choices=("json", "markdown"), default="markdown")
    s.add_argument("--weights", type=_float_list, default=[0.25, 0.25, 0.25, 0.25])
    s.set_defaults(func=cmd_eval_score)

    p = sub.add_parser("train-baseline", help="train the n-gram baseline")
    p.add_argument("--in", dest="inp", required=True, nargs="+")
    p.add_argument("--order", type=int, default=4)
    p.add_argument("--out", required=True)
    p.add_argument("--smoothing-k", type=float, default=0.01)
    p.add_argument("--backoff", type=float, default=0.4)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train_baseline)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except UsageError as exc:
        print(f"hpclm: error: {exc}", file=sys.stderr)
        return 1
    except (BackendUnavailable, OSError, RuntimeError, ValueError, KeyError) as exc:
        print(f"hpclm: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
