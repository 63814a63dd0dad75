"""Context-split completion tasks, backend runs with a resumable journal, scoring
and report rendering."""

from __future__ import annotations

import json
import logging
import math
import os
from collections import Counter, defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import FunctionRecord
from .lse import LseConfig, LseRejected, apply_lse, derive_seed
from .metrics.codebleu import DEFAULT_WEIGHTS, ReferenceUnparseable, codebleu
from .modeling.backends import CompletionBackend, GenerationConfig
from .syntax import ParseFailure, detokenize, token_texts

log = logging.getLogger(__name__)

DEFAULT_CONTEXT_LENS = (100, 300, 600)
VARIANTS = ("raw", "lse")
COMPONENTS = ("bleu", "weighted", "ast", "dataflow", "codebleu")


class BackendUnavailable(RuntimeError):
    """Every task of a batch failed; the backend is presumed down."""


@dataclass(frozen=True)
class EvalTask:
    record_id: str
    dataset: str
    variant: str
    context_len: int
    prompt_tokens: tuple[str, ...]
    reference_tokens: tuple[str, ...]
    language: str = "c"

    @property
    def task_id(self) -> str:
        return f"{self.dataset}/{self.record_id}/{self.variant}/{self.context_len}"

    def to_json(self) -> dict:
        return {
            "task_id": self.task_id,
            "record_id": self.record_id,
            "dataset": self.dataset,
            "variant": self.variant,
            "context_len": self.context_len,
            "lang": self.language,
            "prompt": list(self.prompt_tokens),
            "reference": list(self.reference_tokens),
        }

    @classmethod
    def from_json(cls, obj: dict) -> EvalTask:
        return cls(
            record_id=obj["record_id"],
            dataset=obj["dataset"],
            variant=obj["variant"],
            context_len=int(obj["context_len"]),
            prompt_tokens=tuple(obj["prompt"]),
            reference_tokens=tuple(obj["reference"]),
            language=obj.get("lang", "c"),
        )


def make_tasks(
    records: Iterable[FunctionRecord],
    context_lens: Sequence[int] = DEFAULT_CONTEXT_LENS,
    variants: Sequence[str] = VARIANTS,
    lse_config: LseConfig | None = None,
    dataset: str = "general",
    counters: Counter | None = None,
) -> list[EvalTask]:
    """One task per (record, context length, variant).

    Records whose token sequence is not longer than the largest context are
    skipped and counted in ``counters["skipped_short"]``.  The lse variant
    anonymizes the whole function once, with a seed derived from the record id,
    so prompt and reference share one placeholder map.
    """
    lens = sorted(set(int(n) for n in context_lens))
    if not lens or lens[0] <= 0:
        raise ValueError(f"context lengths must be positive, got {context_lens}")
    for v in variants:
        if v not in VARIANTS:
            raise ValueError(f"unknown variant {v!r}")
    base_cfg = lse_config or LseConfig()
    counters = counters if counters is not None else Counter()
    longest = lens[-1]
    tasks = []
    for rec in records:
        counters["records"] += 1
        streams = {}
        raw = token_texts(rec.code, rec.language)
        if len(raw) <= longest:
            counters["skipped_short"] += 1
            continue
        for variant in variants:
            if variant == "raw":
                streams[variant] = raw
                continue
            cfg = replace(base_cfg, seed=derive_seed(base_cfg.seed, rec.id))
            try:
                toks = token_texts(apply_lse(rec.code, rec.language, cfg), rec.language)
            except (LseRejected, ParseFailure) as exc:
                log.debug("lse skipped for %s: %s", rec.id, exc)
                counters["skipped_lse"] += 1
                continue
            streams[variant] = toks
        for n in lens:
            for variant in variants:
                toks = streams.get(variant)
                if toks is None:
                    continue
                tasks.append(EvalTask(rec.id, dataset, variant, n, tuple(toks[:n]), tuple(toks[n:]), rec.language))
    counters["tasks"] += len(tasks)
    return tasks


# --------------------------------------------------------------------------- running


@dataclass
class EvalResult:
    task: EvalTask
    backend: str
    completion: list[str] | None
    error: str | None = None

    def to_json(self) -> dict:
        return {
            "task_id": self.task.task_id,
            "backend": self.backend,
            "completion": self.completion,
            "error": self.error,
            "task": self.task.to_json(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> EvalResult:
        return cls(EvalTask.from_json(obj["task"]), obj["backend"], obj["completion"], obj.get("error"))


def read_journal(path: str | Path) -> list[EvalResult]:
    """Entries of a journal; a torn trailing line from a crash is ignored."""
    out = []
    path = Path(path)
    if not path.exists():
        return out
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.endswith("\n"):
                break
            out.append(EvalResult.from_json(json.loads(line)))
    return out


def _truncate_torn_tail(path: Path) -> None:
    data = path.read_bytes()
    if data and not data.endswith(b"\n"):
        keep = data.rfind(b"\n") + 1
        with open(path, "r+b") as fh:
            fh.truncate(keep)


def _run_one(backend: CompletionBackend, task: EvalTask, config: GenerationConfig) -> EvalResult:
    limit = len(task.reference_tokens)
    max_new = limit if config.max_new_tokens is None else min(config.max_new_tokens, limit)
    seed = derive_seed(config.seed, task.task_id)
    try:
        out = backend.complete_task(task, max_new, config.temperature, seed)
    except Exception as exc:  # recorded per task, never fatal on its own
        return EvalResult(task, backend.name, None, f"{type(exc).__name__}: {exc}")
    return EvalResult(task, backend.name, list(out)[:limit])


def run_eval(
    tasks: Sequence[EvalTask],
    backend: CompletionBackend,
    config: GenerationConfig | None = None,
    journal: str | Path | None = None,
    batch_size: int = 16,
    max_in_flight: int | None = None,
) -> list[EvalResult]:
    """Complete every task, appending results to ``journal`` in task order.

    Tasks already present in the journal for this backend are not rerun, so a
    killed run restarted with the same arguments yields the same journal.
    """
    config = config or GenerationConfig()
    done: dict[str, EvalResult] = {}
    fh = None
    if journal is not None:
        journal = Path(journal)
        if journal.exists():
            _truncate_torn_tail(journal)
            for res in read_journal(journal):
                if res.backend == backend.name:
                    done[res.task.task_id] = res
        journal.parent.mkdir(parents=True, exist_ok=True)
        fh = open(journal, "a", encoding="utf-8")
    todo = [t for t in tasks if t.task_id not in done]
    if done:
        log.info("resuming: %d of %d tasks already in journal", len(tasks) - len(todo), len(tasks))
    workers = max(1, max_in_flight or backend.max_in_flight)
    try:
        with ThreadPoolExecutor(workers) as pool:
            for start in range(0, len(todo), batch_size):
                batch = todo[start : start + batch_size]
                if workers == 1:
                    results = [_run_one(backend, t, config) for t in batch]
                else:
                    results = list(pool.map(lambda t: _run_one(backend, t, config), batch))
                for res in results:
                    done[res.task.task_id] = res
                    if fh is not None:
                        fh.write(json.dumps(res.to_json(), ensure_ascii=False) + "\n")
                if fh is not None:
                    fh.flush()
                    os.fsync(fh.fileno())
                if all(r.error for r in results):
                    raise BackendUnavailable(f"all {len(batch)} tasks of a batch failed; last error: {results[-1].error}")
                log.info("completed %d/%d", len(tasks) - len(todo) + start + len(batch), len(tasks))
    finally:
        if fh is not None:
            fh.close()
    return [done[t.task_id] for t in tasks]


# --------------------------------------------------------------------------- scoring


@dataclass(frozen=True)
class TaskScore:
    task_id: str
    dataset: str
    backend: str
    variant: str
    context_len: int
    record_id: str
    scores: dict | None
    error: str | None = None

    def to_json(self) -> dict:
        return {
            "task_id": self.task_id,
            "dataset": self.dataset,
            "backend": self.backend,
            "variant": self.variant,
            "context_len": self.context_len,
            "record_id": self.record_id,
            "scores": self.scores,
            "error": self.error,
        }

    @classmethod
    def from_json(cls, obj: dict) -> TaskScore:
        return cls(**obj)


@dataclass(frozen=True)
class ReportCell:
    dataset: str
    backend: str
    variant: str
    context_len: int
    count: int
    errors: int
    mean: dict  # component name -> mean over scored tasks (None if never present)
    std: float | None  # population std of the aggregate

    @property
    def key(self) -> tuple:
        return (self.dataset, self.backend, self.variant, self.context_len)

    def to_json(self) -> dict:
        return {
            "dataset": self.dataset,
            "backend": self.backend,
            "variant": self.variant,
            "context_len": self.context_len,
            "count": self.count,
            "errors": self.errors,
            "mean": self.mean,
            "std": self.std,
        }

    @classmethod
    def from_json(cls, obj: dict) -> ReportCell:
        return cls(**obj)


def _variant_rank(v: str) -> int:
    return VARIANTS.index(v) if v in VARIANTS else len(VARIANTS)


def _cell_order(key: tuple) -> tuple:
    dataset, backend, variant, ctx = key
    return (dataset, backend, _variant_rank(variant), variant, ctx)


@dataclass
class EvalReport:
    cells: list[ReportCell]
    tasks: list[TaskScore] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def cell(self, dataset: str, backend: str, variant: str, context_len: int) -> ReportCell | None:
        for c in self.cells:
            if c.key == (dataset, backend, variant, context_len):
                return c
        return None

    def to_json(self) -> dict:
        return {
            "config": self.config,
            "cells": [c.to_json() for c in self.cells],
            "tasks": [t.to_json() for t in self.tasks],
        }

    @classmethod
    def from_json(cls, obj: dict) -> EvalReport:
        return cls(
            cells=[ReportCell.from_json(c) for c in obj["cells"]],
            tasks=[TaskScore.from_json(t) for t in obj.get("tasks", [])],
            config=obj.get("config", {}),
        )


def _split_text(prompt: Sequence[str], continuation: Sequence[str]) -> tuple[str, str]:
    """Detokenize prompt and continuation as one stream, then cut the text.

    A context boundary can fall inside ``name _ 12``, so the halves must be
    rendered together for the suffix to fuse back onto its identifier.
    """
    text, offsets = detokenize(list(prompt) + list(continuation), with_offsets=True)
    cut = offsets[len(prompt)] if continuation else len(text)
    return text[:cut], text[cut:]


def score_task(result: EvalResult, weights: Sequence[float] = DEFAULT_WEIGHTS) -> TaskScore:
    task = result.task
    meta = dict(
        task_id=task.task_id,
        dataset=task.dataset,
        backend=result.backend,
        variant=task.variant,
        context_len=task.context_len,
        record_id=task.record_id,
    )
    if result.error is not None or result.completion is None:
        return TaskScore(**meta, scores=None, error=result.error or "no completion")
    prompt, reference = _split_text(task.prompt_tokens, task.reference_tokens)
    _, completion = _split_text(task.prompt_tokens, result.completion)
    try:
        s = codebleu(completion, reference, task.language, weights, context=prompt, separator="")
    except (ReferenceUnparseable, ValueError) as exc:
        return TaskScore(**meta, scores=None, error=f"scoring: {type(exc).__name__}: {exc}")
    return TaskScore(**meta, scores=s.to_json())


def _mean(values: list) -> float | None:
    present = [v for v in values if v is not None]
    return math.fsum(present) / len(present) if present else None


def aggregate(scores: Iterable[TaskScore], config: dict | None = None) -> EvalReport:
    groups: dict[tuple, list[TaskScore]] = defaultdict(list)
    ordered = list(scores)
    for ts in ordered:
        groups[(ts.dataset, ts.backend, ts.variant, ts.context_len)].append(ts)
    cells = []
    for key in sorted(groups, key=_cell_order):
        members = groups[key]
        ok = [m.scores for m in members if m.scores is not None]
        mean = {c: _mean([s[c] for s in ok]) for c in COMPONENTS}
        agg = [s["codebleu"] for s in ok]
        std = None
        if agg:
            mu = math.fsum(agg) / len(agg)
            std = math.sqrt(math.fsum((a - mu) ** 2 for a in agg) / len(agg))
        cells.append(ReportCell(*key, count=len(members), errors=len(members) - len(ok), mean=mean, std=std))
    return EvalReport(cells, ordered, dict(config or {}))


def score_results(
    results: Iterable[EvalResult],
    weights: Sequence[float] = DEFAULT_WEIGHTS,
    config: dict | None = None,
) -> EvalReport:
    """Per-task CodeBLEU, then per-cell means; errored tasks are counted but not averaged."""
    weights = tuple(weights)
    cfg = {"weights": list(weights)}
    cfg.update(config or {})
    return aggregate((score_task(r, weights) for r in results), cfg)


# --------------------------------------------------------------------------- rendering


def _fmt(cell: ReportCell | None) -> str:
    if cell is None:
        return "-"
    mean = cell.mean.get("codebleu")
    text = "n/a" if mean is None else f"{mean:.3f}"
    note = f"n={cell.count}"
    if cell.errors:
        note += f", err={cell.errors}"
    return f"{text} ({note})"


def render_markdown(report: EvalReport) -> str:
    lines = []
    by_dataset: dict[str, list[ReportCell]] = defaultdict(list)
    for c in report.cells:
        by_dataset[c.dataset].append(c)
    for dataset in sorted(by_dataset):
        cells = by_dataset[dataset]
        ctxs = sorted({c.context_len for c in cells})
        rows = sorted({(c.backend, c.variant) for c in cells}, key=lambda bv: (bv[0], _variant_rank(bv[1]), bv[1]))
        lookup = {(c.backend, c.variant, c.context_len): c for c in cells}
        if lines:
            lines.append("")
        lines.append(f"## {dataset}")
        lines.append("")
        lines.append("| backend | variant | " + " | ".join(f"context-{n}" for n in ctxs) + " |")
        lines.append("|---|---|" + "---|" * len(ctxs))
        for backend, variant in rows:
            vals = " | ".join(_fmt(lookup.get((backend, variant, n))) for n in ctxs)
            lines.append(f"| {backend} | {variant} | {vals} |")
    return "\n".join(lines) + "\n"


def render_report(report: EvalReport, fmt: str = "markdown") -> str:
    if fmt == "json":
        return json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n"
    if fmt == "markdown":
        return render_markdown(report)
    raise ValueError(f"unknown report format {fmt!r}")


def parse_report(text: str) -> EvalReport:
    return EvalReport.from_json(json.loads(text))


def write_tasks(path: str | Path, tasks: Iterable[EvalTask]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in tasks:
            fh.write(json.dumps(t.to_json(), ensure_ascii=False) + "\n")


def read_tasks(path: str | Path) -> list[EvalTask]:
    with open(path, encoding="utf-8") as fh:
        return [EvalTask.from_json(json.loads(line)) for line in fh if line.strip()]
