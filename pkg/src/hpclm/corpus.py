"""Function-level corpus construction: extraction, dedup, size filters, splits."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import re
import warnings
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from .syntax import DIRECTIVE_KINDS, SyntaxNode, SyntaxTree, lex, normalize_language, parse, walk

log = logging.getLogger(__name__)

MIN_TOKENS = 100
MAX_BYTES = 1_048_576
SHARD_SIZE = 100_000
DEFAULT_RATIOS = (0.98, 0.01, 0.01)
SPLITS = ("train", "validation", "test")

EXTENSIONS = {
    ".c": "c",
    ".h": "c",
    ".cpp": "cpp",
    ".cc": "cpp",
    ".cxx": "cpp",
    ".c++": "cpp",
    ".hpp": "cpp",
    ".hh": "cpp",
    ".hxx": "cpp",
}

_OMP_PRAGMA = re.compile(r"^#\s*pragma\s+omp\b")
_OMP_LINE = re.compile(r"(?m)^[ \t]*#[ \t]*pragma[ \t]+omp\b(?:[^\n]*\\\n)*[^\n]*(?:\n|\Z)")


class InsufficientRecords(UserWarning):
    """Fewer OpenMP records exist than the requested sample size."""


class BadRatios(ValueError):
    pass


class DegenerateSplit(UserWarning):
    """Some split came out empty."""


@dataclass
class FunctionRecord:
    id: str
    repo: str
    path: str
    language: str
    code: str
    token_count: int
    content_hash: str
    has_openmp: bool
    lse_code: str | None = None
    offset: int = 0

    @classmethod
    def from_code(cls, code: str, language: str, repo: str = "", path: str = "", offset: int = 0, id: str | None = None):
        language = normalize_language(language)
        return cls(
            id=id if id is not None else f"{repo}/{path}:{offset}",
            repo=repo,
            path=path,
            language=language,
            code=code,
            token_count=len(lex(code, language)),
            content_hash=content_hash(code, language),
            has_openmp=has_openmp(code, language),
            offset=offset,
        )

    @property
    def order_key(self) -> tuple[str, str, int]:
        return (self.repo, self.path, self.offset)

    def to_json(self) -> dict:
        out = {
            "id": self.id,
            "repo": self.repo,
            "path": self.path,
            "lang": self.language,
            "code": self.code,
            "tokens": self.token_count,
            "sha256": self.content_hash,
            "openmp": self.has_openmp,
        }
        if self.lse_code is not None:
            out["lse_code"] = self.lse_code
        return out

    @classmethod
    def from_json(cls, obj: dict) -> FunctionRecord:
        rid = obj["id"]
        head, _, tail = rid.rpartition(":")
        return cls(
            id=rid,
            repo=obj["repo"],
            path=obj["path"],
            language=normalize_language(obj["lang"]),
            code=obj["code"],
            token_count=int(obj["tokens"]),
            content_hash=obj["sha256"],
            has_openmp=bool(obj["openmp"]),
            lse_code=obj.get("lse_code"),
            offset=int(tail) if head and tail.isdigit() else 0,
        )


def normalized_code(code: str, language: str = "c") -> str:
    """Comment-free, whitespace-normalized form used for hashing."""
    return " ".join(t.text for t in lex(code, language, split_suffix=False))


def content_hash(code: str, language: str = "c") -> str:
    return hashlib.sha256(normalized_code(code, language).encode("utf-8")).hexdigest()


def _tree_has_openmp(root: SyntaxNode) -> bool:
    return any(n.kind in DIRECTIVE_KINDS and _OMP_PRAGMA.match(n.text.lstrip()) for n in walk(root))


def has_openmp(code: str, language: str = "c") -> bool:
    """True if a ``#pragma omp`` directive line (not a comment) is present."""
    return _tree_has_openmp(parse(code, language).root)


def strip_openmp(code: str) -> str:
    """Drop every ``#pragma omp`` line, continuation lines included."""
    return _OMP_LINE.sub("", code)


# --------------------------------------------------------------------------- extraction


def _function_units(tree: SyntaxTree) -> list[SyntaxNode]:
    """Top-level function definitions; template functions keep their header."""
    found = []
    stack = [tree.root]
    while stack:
        node = stack.pop()
        if node.kind == "function_definition":
            found.append(node)
            continue
        if node.kind == "template_declaration" and any(c.kind == "function_definition" for c in node.children):
            found.append(node)
            continue
        stack.extend(reversed(node.children))
    return found


def _strip_comments(tree: SyntaxTree, node: SyntaxNode) -> str:
    data = tree.source_bytes
    pieces = []
    pos = node.start
    for n in walk(node):
        if n.kind != "comment":
            continue
        pieces.append(data[pos : n.start])
        # block comments separate tokens; line comments are followed by a newline anyway
        pieces.append(b" " if n.text.startswith("/*") else b"")
        pos = n.end
    pieces.append(data[pos : node.end])
    text = b"".join(pieces).decode("utf-8", errors="replace")
    return "\n".join(line.rstrip() for line in text.splitlines())


def extract_functions(
    file_text: str | bytes,
    language: str,
    repo: str = "",
    path: str = "",
    counters: Counter | None = None,
) -> list[FunctionRecord]:
    """One record per top-level function that parses cleanly.

    Functions containing syntax errors are dropped and counted under
    ``rejected_parse`` in ``counters``.  Comments are removed from ``code``;
    everything outside function bodies is discarded.
    """
    language = normalize_language(language)
    counters = counters if counters is not None else Counter()
    tree = parse(file_text, language)
    records = []
    for unit in _function_units(tree):
        code = _strip_comments(tree, unit)
        check = parse(code, language)
        if check.error_count or not code.strip():
            counters["rejected_parse"] += 1
            continue
        tokens = lex(code, language)
        records.append(
            FunctionRecord(
                id=f"{repo}/{path}:{unit.start}",
                repo=repo,
                path=path,
                language=language,
                code=code,
                token_count=len(tokens),
                content_hash=content_hash(code, language),
                has_openmp=_tree_has_openmp(check.root),
                offset=unit.start,
            )
        )
    return records


# --------------------------------------------------------------------------- filtering


def filter_records(
    records: Iterable[FunctionRecord], min_tokens: int = MIN_TOKENS, max_bytes: int = MAX_BYTES
) -> tuple[list[FunctionRecord], Counter]:
    """Keep records with more than ``min_tokens`` tokens and fewer than ``max_bytes`` bytes."""
    accepted = []
    counters = Counter(rejected_too_small=0, rejected_too_large=0)
    for rec in records:
        if rec.token_count <= min_tokens:
            counters["rejected_too_small"] += 1
        elif len(rec.code.encode("utf-8")) >= max_bytes:
            counters["rejected_too_large"] += 1
        else:
            accepted.append(rec)
    return accepted, counters


def deduplicate(records: Sequence[FunctionRecord]) -> tuple[list[FunctionRecord], int]:
    """Exact dedup on ``content_hash``; the first record in (repo, path, offset) order wins."""
    winner: dict[str, FunctionRecord] = {}
    for rec in records:
        best = winner.get(rec.content_hash)
        if best is None or rec.order_key < best.order_key:
            winner[rec.content_hash] = rec
    keep = {id(r) for r in winner.values()}
    unique = [r for r in records if id(r) in keep]
    return unique, len(records) - len(unique)


def _sample(records: Sequence[FunctionRecord], cap: int, seed: int) -> list[FunctionRecord]:
    if len(records) <= cap:
        return list(records)
    idx = sorted(random.Random(seed).sample(range(len(records)), cap))
    return [records[i] for i in idx]


def partition_openmp(
    records: Sequence[FunctionRecord], cap: int = 20_000, seed: int = 0
) -> tuple[list[FunctionRecord], list[FunctionRecord]]:
    """Build the General (pragmas removed) and OpenMP (pragmas kept) sets.

    Both come from the same seeded sample of OpenMP-bearing records.
    """
    pool = [r for r in records if r.has_openmp]
    if len(pool) < cap:
        warnings.warn(InsufficientRecords(f"only {len(pool)} OpenMP records, wanted {cap}"), stacklevel=2)
    chosen = _sample(pool, cap, seed)
    general = []
    for rec in chosen:
        code = strip_openmp(rec.code)
        copy = FunctionRecord.from_code(code, rec.language, rec.repo, rec.path, rec.offset, id=rec.id)
        general.append(copy)
    openmp = [FunctionRecord(**{**asdict(r), "lse_code": None}) for r in chosen]
    return general, openmp


def split_dataset(
    records: Sequence[FunctionRecord], ratios: Sequence[float] = DEFAULT_RATIOS, seed: int = 0
) -> dict[str, list[FunctionRecord]]:
    """Repository-level train/validation/test split."""
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise BadRatios(f"ratios must be three non-negative numbers summing to 1, got {ratios}")
    repos = sorted({r.repo for r in records})
    random.Random(seed).shuffle(repos)
    n = len(repos)
    cut1 = round(ratios[0] * n)
    cut2 = max(cut1, round((ratios[0] + ratios[1]) * n))
    assign = {}
    for i, repo in enumerate(repos):
        assign[repo] = "train" if i < cut1 else ("validation" if i < cut2 else "test")
    out: dict[str, list[FunctionRecord]] = {s: [] for s in SPLITS}
    for rec in records:
        out[assign[rec.repo]].append(rec)
    empty = [s for s in SPLITS if not out[s]]
    if records and empty:
        warnings.warn(DegenerateSplit(f"empty split(s): {', '.join(empty)}"), stacklevel=2)
    return out


# --------------------------------------------------------------------------- manifest


@dataclass
class LanguageStats:
    repos: int = 0
    bytes: int = 0
    files: int = 0
    functions: int = 0


@dataclass
class CorpusManifest:
    languages: dict[str, LanguageStats] = field(default_factory=dict)
    extracted: int = 0
    accepted: int = 0
    rejected_too_small: int = 0
    rejected_too_large: int = 0
    rejected_duplicates: int = 0
    rejected_parse: int = 0
    splits: dict[str, int] = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    @property
    def rejected(self) -> int:
        return self.rejected_too_small + self.rejected_too_large + self.rejected_duplicates + self.rejected_parse

    def balanced(self) -> bool:
        return self.accepted + self.rejected == self.extracted

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> CorpusManifest:
        obj = dict(obj)
        obj["languages"] = {k: LanguageStats(**v) for k, v in obj.get("languages", {}).items()}
        return cls(**obj)

    def table(self) -> str:
        """Per-language summary in the usual repos / size / files / functions layout."""
        rows = ["| Language | Repos | Size (GB) | Files (#) | Functions (#) |", "|---|---:|---:|---:|---:|"]
        for lang, st in sorted(self.languages.items()):
            label = {"c": "C", "cpp": "C++"}.get(lang, lang)
            rows.append(f"| {label} | {st.repos:,} | {st.bytes / 1e9:.2f} | {st.files:,} | {st.functions:,} |")
        return "\n".join(rows)


def compute_manifest(
    file_stats: Iterable[tuple[str, str, int]],
    extracted: Sequence[FunctionRecord],
    counters: Counter,
    accepted: Sequence[FunctionRecord],
    splits: dict[str, Sequence[FunctionRecord]] | None = None,
    config: dict | None = None,
) -> CorpusManifest:
    """Assemble the manifest.

    ``file_stats`` holds one (repo, language, n_bytes) triple per ingested file;
    ``extracted`` are all cleanly parsed functions and ``counters`` carries the
    rejection counts (``rejected_parse`` functions are not in ``extracted``).
    """
    langs: dict[str, LanguageStats] = {}
    repos: dict[str, set] = {}
    for repo, lang, n_bytes in file_stats:
        st = langs.setdefault(lang, LanguageStats())
        st.files += 1
        st.bytes += n_bytes
        repos.setdefault(lang, set()).add(repo)
    for lang, names in repos.items():
        langs[lang].repos = len(names)
    for rec in extracted:
        langs.setdefault(rec.language, LanguageStats()).functions += 1
    manifest = CorpusManifest(
        languages=langs,
        extracted=len(extracted) + counters.get("rejected_parse", 0),
        accepted=len(accepted),
        rejected_too_small=counters.get("rejected_too_small", 0),
        rejected_too_large=counters.get("rejected_too_large", 0),
        rejected_duplicates=counters.get("rejected_duplicates", 0),
        rejected_parse=counters.get("rejected_parse", 0),
        splits={k: len(v) for k, v in (splits or {}).items()},
        config=dict(config or {}),
    )
    if not manifest.balanced():
        raise AssertionError(f"manifest accounting does not balance: {manifest}")
    return manifest


# --------------------------------------------------------------------------- storage


def write_records(path: str | Path, records: Iterable[FunctionRecord]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_json(), ensure_ascii=False) + "\n")


def write_sharded(out_dir: str | Path, stem: str, records: Sequence[FunctionRecord], shard_size: int = SHARD_SIZE) -> list[Path]:
    out_dir = Path(out_dir)
    if len(records) <= shard_size:
        path = out_dir / f"{stem}.jsonl"
        write_records(path, records)
        return [path]
    paths = []
    for i in range(0, len(records), shard_size):
        path = out_dir / f"{stem}-{i // shard_size:05d}.jsonl"
        write_records(path, records[i : i + shard_size])
        paths.append(path)
    return paths


def read_records(*paths: str | Path) -> list[FunctionRecord]:
    out = []
    for p in paths:
        with open(p, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    out.append(FunctionRecord.from_json(json.loads(line)))
    return out


def iter_source_files(root: str | Path, languages: Iterable[str] = ("c", "cpp")) -> Iterator[tuple[str, str, Path, str]]:
    """(repo, relative path, absolute path, language) in sorted order.

    The first directory level under ``root`` names the repository.
    """
    root = Path(root)
    wanted = {normalize_language(l) for l in languages}
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames.sort()
        for name in sorted(filenames):
            lang = EXTENSIONS.get(Path(name).suffix.lower())
            if lang not in wanted:
                continue
            full = Path(dirpath) / name
            rel = full.relative_to(root)
            repo = rel.parts[0] if len(rel.parts) > 1 else root.name
            path = str(Path(*rel.parts[1:])) if len(rel.parts) > 1 else rel.name
            yield repo, path, full, lang


def _extract_file(args):
    repo, path, full, lang = args
    data = Path(full).read_bytes()
    counters = Counter()
    recs = extract_functions(data, lang, repo, path, counters)
    return (repo, lang, len(data)), recs, counters


@dataclass
class PrepResult:
    splits: dict[str, list[FunctionRecord]]
    manifest: CorpusManifest
    accepted: list[FunctionRecord]


def prepare_corpus(
    in_dir: str | Path,
    languages: Iterable[str] = ("c", "cpp"),
    min_tokens: int = MIN_TOKENS,
    max_bytes: int = MAX_BYTES,
    seed: int = 0,
    ratios: Sequence[float] = DEFAULT_RATIOS,
    workers: int = 1,
) -> PrepResult:
    """Extract, dedup, filter and split every C/C++ file below ``in_dir``."""
    languages = [normalize_language(l) for l in languages]
    files = list(iter_source_files(in_dir, languages))
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_extract_file, files, chunksize=8))
    else:
        results = [_extract_file(f) for f in files]
    counters = Counter()
    file_stats = []
    extracted: list[FunctionRecord] = []
    for stats, recs, c in results:
        file_stats.append(stats)
        extracted.extend(recs)
        counters.update(c)
    unique, dups = deduplicate(extracted)
    counters["rejected_duplicates"] = dups
    accepted, fc = filter_records(unique, min_tokens, max_bytes)
    counters.update(fc)
    splits = split_dataset(accepted, ratios, seed) if accepted else {s: [] for s in SPLITS}
    config = {
        "languages": languages,
        "min_tokens": min_tokens,
        "max_bytes": max_bytes,
        "seed": seed,
        "ratios": list(ratios),
    }
    manifest = compute_manifest(file_stats, extracted, counters, accepted, splits, config)
    return PrepResult(splits, manifest, accepted)


def save_prep(result: PrepResult, out_dir: str | Path) -> dict[str, list[Path]]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = {name: write_sharded(out_dir, name, recs) for name, recs in result.splits.items()}
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(result.manifest.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return written
