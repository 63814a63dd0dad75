"""CodeBLEU: n-gram BLEU, keyword-weighted n-gram match, AST subtree match and
def-use (data-flow) match, combined as a weighted sum."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

from ..syntax import CPP_KEYWORDS, OPENMP_WORDS, ParseFailure, SyntaxNode, parse, token_texts

EPSILON = 1e-9
KEYWORD_WEIGHT = 5.0
DEFAULT_WEIGHTS = (0.25, 0.25, 0.25, 0.25)
KEYWORDS = frozenset(CPP_KEYWORDS | OPENMP_WORDS | {"#pragma", "omp"})


class EmptyReference(ValueError):
    pass


class ReferenceUnparseable(ValueError):
    pass


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _precision(cand: Sequence[str], ref: Sequence[str], n: int, weight=None) -> tuple[float, float]:
    c_counts = _ngrams(cand, n)
    r_counts = _ngrams(ref, n)
    matches = 0.0
    total = 0.0
    for gram, count in c_counts.items():
        w = weight(gram) if weight else 1.0
        matches += min(count, r_counts.get(gram, 0)) * w
        total += count * w
    return matches, total


def _bleu(cand: Sequence[str], ref: Sequence[str], max_n: int, unigram_weight=None) -> float:
    if not ref:
        raise EmptyReference("reference has no tokens")
    if not cand:
        return 0.0
    log_sum = 0.0
    for n in range(1, max_n + 1):
        matches, total = _precision(cand, ref, n, unigram_weight if n == 1 else None)
        if matches == 0:
            if n == 1:
                return 0.0
            p = EPSILON / (total + EPSILON)
        else:
            p = matches / total
        log_sum += math.log(p)
    c, r = len(cand), len(ref)
    bp = 1.0 if c > r else math.exp(1 - r / c)
    return min(1.0, bp * math.exp(log_sum / max_n))


def bleu(candidate_tokens: Sequence[str], reference_tokens: Sequence[str], max_n: int = 4) -> float:
    """Sentence BLEU with clipped precisions, epsilon smoothing for n >= 2 and brevity penalty."""
    return _bleu(list(candidate_tokens), list(reference_tokens), max_n)


def weighted_ngram_match(
    candidate_tokens: Sequence[str],
    reference_tokens: Sequence[str],
    keyword_set: Iterable[str] = KEYWORDS,
    max_n: int = 4,
) -> float:
    """BLEU where unigram matches and totals count keywords five times."""
    keywords = keyword_set if isinstance(keyword_set, (set, frozenset)) else frozenset(keyword_set)

    def weight(gram):
        return KEYWORD_WEIGHT if gram[0] in keywords else 1.0

    return _bleu(list(candidate_tokens), list(reference_tokens), max_n, weight)


# --------------------------------------------------------------------------- AST match


def subtree_signatures(root: SyntaxNode, start_from: int = 0) -> Counter:
    """Multiset of serialized subtrees rooted at every non-leaf node.

    Leaves contribute their kind only, so identifier and literal texts are
    ignored.  Only subtrees ending after byte ``start_from`` are counted.
    """
    sig: dict[int, str] = {}
    out: Counter = Counter()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if node.kind == "comment":
            continue
        if node.is_leaf:
            sig[id(node)] = node.kind
            continue
        if not done:
            stack.append((node, True))
            stack.extend((c, False) for c in reversed(node.children))
            continue
        inner = " ".join(sig[id(c)] for c in node.children if c.kind != "comment")
        s = f"({node.kind} {inner})"
        sig[id(node)] = s
        if node.end > start_from:
            out[s] += 1
    return out


def _parse_reference(source: str, language: str):
    try:
        tree = parse(source, language)
    except ParseFailure as exc:
        raise ReferenceUnparseable(str(exc)) from exc
    if tree.error_count:
        raise ReferenceUnparseable(f"reference has {tree.error_count} syntax error(s)")
    return tree


def _parse_candidate(source: str, language: str):
    try:
        return parse(source, language)
    except ParseFailure:
        return None


def ast_match(
    candidate_source: str,
    reference_source: str,
    language: str = "c",
    *,
    candidate_from: int = 0,
    reference_from: int = 0,
) -> float | None:
    """Clipped fraction of reference subtrees found in the candidate.

    Returns ``None`` when the reference has no countable subtree.
    """
    ref_tree = _parse_reference(reference_source, language)
    ref = subtree_signatures(ref_tree.root, reference_from)
    if not ref:
        return None
    cand_tree = _parse_candidate(candidate_source, language)
    if cand_tree is None:
        return 0.0
    cand = subtree_signatures(cand_tree.root, candidate_from)
    return sum((cand & ref).values()) / sum(ref.values())


# --------------------------------------------------------------------------- data flow

_DECL_PARENTS = {"declaration", "parameter_declaration", "optional_parameter_declaration", "for_range_loop"}
_DECL_WRAPPERS = {
    "init_declarator",
    "pointer_declarator",
    "reference_declarator",
    "parenthesized_declarator",
    "attributed_declarator",
    "array_declarator",
}


def _def_use_events(root: SyntaxNode):
    """(scope, position, is_def, name, def_kind_or_use_context, ident_start) tuples."""
    events = []
    # (node, parent, field, scope, decl_state); decl_state is None or (kind, def_pos)
    stack = [(root, None, None, None, None)]
    while stack:
        node, parent, fname, scope, decl = stack.pop()
        kind = node.kind
        if kind == "function_definition":
            scope = node.start
        if kind == "qualified_identifier":
            continue
        if node.is_leaf:
            if kind != "identifier":
                continue
            if decl is not None:
                def_kind, pos = decl
                events.append((scope, pos, 1, node.text, def_kind, node.start))
                continue
            if parent is not None and parent.kind == "call_expression" and fname == "function":
                continue
            if parent is not None and parent.kind == "function_declarator":
                continue
            ctx = parent.kind if parent is not None else ""
            events.append((scope, node.start, 0, node.text, ctx, node.start))
            if parent is not None and parent.kind == "assignment_expression" and fname == "left":
                events.append((scope, parent.end, 1, node.text, "assign", node.start))
            elif parent is not None and parent.kind == "update_expression":
                events.append((scope, parent.end, 1, node.text, "update", node.start))
            continue
        for child in reversed(node.children):
            child_decl = None
            if child.field == "declarator" or (kind == "reference_declarator" and child.named):
                if kind in _DECL_PARENTS:
                    def_kind = "param" if "parameter" in kind else "decl"
                    child_decl = (def_kind, child.end)
                elif kind in _DECL_WRAPPERS and decl is not None:
                    child_decl = decl
            if kind == "assignment_expression" and child.field == "left" and child.kind == "identifier":
                # compound assignment reads before writing; plain "=" only writes
                op = next((c.kind for c in node.children if c.field == "operator"), "=")
                if op == "=":
                    child_decl = ("assign", node.end)
            stack.append((child, node, child.field, scope, child_decl))
    return events


def dataflow_edges(source: str, language: str = "c", start_from: int = 0) -> Counter:
    """Def-use edges whose use lies after byte ``start_from``.

    A use of ``v`` links to the latest earlier definition of ``v`` in the same
    function.  Variables are renamed v0, v1, ... by first appearance, so edges
    are invariant under consistent renaming.
    """
    tree = parse(source, language)
    return _edges(tree.root, start_from)


def _edges(root: SyntaxNode, start_from: int) -> Counter:
    events = _def_use_events(root)
    order: dict[str, str] = {}
    for ev in sorted(events, key=lambda e: e[5]):
        order.setdefault(ev[3], f"v{len(order)}")
    events.sort(key=lambda e: (e[0] is not None, e[0] or 0, e[1], e[2]))
    last_def: dict[tuple, str] = {}
    edges: Counter = Counter()
    for scope, _pos, is_def, name, label, start in events:
        key = (scope, name)
        if is_def:
            last_def[key] = label
        elif key in last_def and start >= start_from:
            edges[(order[name], last_def[key], label)] += 1
    return edges


def dataflow_match(
    candidate_source: str,
    reference_source: str,
    language: str = "c",
    *,
    candidate_from: int = 0,
    reference_from: int = 0,
) -> float | None:
    """Clipped fraction of reference def-use edges present in the candidate.

    ``None`` when the reference has no edges.
    """
    ref_tree = _parse_reference(reference_source, language)
    ref = _edges(ref_tree.root, reference_from)
    if not ref:
        return None
    cand_tree = _parse_candidate(candidate_source, language)
    if cand_tree is None:
        return 0.0
    cand = _edges(cand_tree.root, candidate_from)
    return sum((cand & ref).values()) / sum(ref.values())


# --------------------------------------------------------------------------- CodeBLEU


@dataclass(frozen=True)
class CodeBleuScore:
    bleu: float
    weighted_ngram: float
    ast_match: float | None
    dataflow_match: float | None
    weights: tuple[float, float, float, float]
    aggregate: float

    def to_json(self) -> dict:
        return {
            "bleu": self.bleu,
            "weighted": self.weighted_ngram,
            "ast": self.ast_match,
            "dataflow": self.dataflow_match,
            "codebleu": self.aggregate,
        }


def combine(components: Sequence[float | None], weights: Sequence[float] = DEFAULT_WEIGHTS) -> float:
    """Weighted sum; absent components drop out and the rest are renormalized."""
    present = [(c, w) for c, w in zip(components, weights) if c is not None]
    if not present:
        return 0.0
    total = sum(w for _, w in present)
    if total <= 0:
        return sum(c for c, _ in present) / len(present)
    return sum(c * w for c, w in present) / total


def codebleu(
    candidate_source: str,
    reference_source: str,
    language: str = "c",
    weights: Sequence[float] = DEFAULT_WEIGHTS,
    *,
    context: str | None = None,
    separator: str = "\n",
    keyword_set: Iterable[str] = KEYWORDS,
) -> CodeBleuScore:
    """Score a candidate against a reference.

    With ``context`` (the shared prompt), the syntax and data-flow components
    parse ``context + separator + candidate`` and likewise for the reference,
    but only count structure that reaches into the continuation.  Pass an
    empty separator when the context was cut from the same text stream, e.g.
    in the middle of an identifier.
    """
    weights = tuple(float(w) for w in weights)
    if len(weights) != 4 or any(w < 0 for w in weights) or abs(sum(weights) - 1.0) > 1e-9:
        raise ValueError(f"weights must be four non-negative numbers summing to 1, got {weights}")
    cand_tokens = token_texts(candidate_source, language)
    ref_tokens = token_texts(reference_source, language)
    b = bleu(cand_tokens, ref_tokens)
    wb = weighted_ngram_match(cand_tokens, ref_tokens, keyword_set)
    if context:
        head = context + separator
        offset = len(head.encode("utf-8"))
        cand_full, ref_full = head + candidate_source, head + reference_source
    else:
        offset = 0
        cand_full, ref_full = candidate_source, reference_source
    am = ast_match(cand_full, ref_full, language, candidate_from=offset, reference_from=offset)
    dm = dataflow_match(cand_full, ref_full, language, candidate_from=offset, reference_from=offset)
    agg = combine((b, wb, am, dm), weights)
    return CodeBleuScore(b, wb, am, dm, weights, min(1.0, max(0.0, agg)))
