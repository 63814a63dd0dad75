"""Local semantics elimination.

Declared identifiers, number literals and string literals are replaced by
placeholders such as ``var_17`` or ``num_342``.  The numeric suffixes are drawn
at random per compilation unit, so a placeholder carries no information about
the role, position or count of what it replaced.
"""

from __future__ import annotations

import hashlib
import logging
import random
from dataclasses import dataclass, field

from .syntax import SyntaxNode, SyntaxTree, parse, regenerate, walk

log = logging.getLogger(__name__)

ROLES = ("function", "variable", "array", "parameter", "number", "string")
PREFIX = {
    "function": "func",
    "variable": "var",
    "parameter": "var",
    "array": "arr",
    "number": "num",
    "string": "str",
}
PLACEHOLDER_PATTERN = r"^(func|var|arr|num|str)_[0-9]+$"


class LseRejected(Exception):
    """The source has more syntax errors than the configured threshold."""


@dataclass(frozen=True)
class LseConfig:
    suffix_range: tuple[int, int] = (1, 1000)
    seed: int = 0
    anonymize_numbers: bool = True
    anonymize_strings: bool = True
    compilable_mode: bool = False
    max_errors: int = 0

    def __post_init__(self):
        lo, hi = self.suffix_range
        if lo > hi:
            raise ValueError(f"empty suffix range {self.suffix_range}")


@dataclass
class AnonymizationMap:
    """Original (text, role) -> placeholder, injective within one unit."""

    entries: dict[tuple[str, str], str] = field(default_factory=dict)
    # text -> role for declared identifiers; used to resolve later occurrences
    declared: dict[str, str] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, key) -> bool:
        return key in self.entries

    def get(self, text: str, role: str) -> str | None:
        return self.entries.get((text, role))

    def by_text(self) -> dict[str, str]:
        return {text: rep for (text, _), rep in self.entries.items()}


class SuffixGenerator:
    """Unique random suffixes; extends past the range once it is used up."""

    def __init__(self, suffix_range: tuple[int, int], seed: int):
        self.lo, self.hi = suffix_range
        self.rng = random.Random(seed)
        self.used: set[int] = set()
        self._overflow = self.hi

    def __call__(self) -> int:
        if len(self.used) >= self.hi - self.lo + 1:
            self._overflow += 1
            while self._overflow in self.used:
                self._overflow += 1
            value = self._overflow
        else:
            value = self.rng.randint(self.lo, self.hi)
            while value in self.used:
                value = self.rng.randint(self.lo, self.hi)
        self.used.add(value)
        return value


def derive_seed(global_seed: int, record_id: str) -> int:
    """Per-record 64-bit seed so batch results do not depend on order."""
    digest = hashlib.sha256(f"{global_seed}:{record_id}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


# declarator wrappers we look through to find the declared name
_DECLARATOR_WRAPPERS = {
    "init_declarator",
    "pointer_declarator",
    "reference_declarator",
    "parenthesized_declarator",
    "attributed_declarator",
    "array_declarator",
    "function_declarator",
}
_CONDITIONAL_DIRECTIVES = {"preproc_if", "preproc_ifdef", "preproc_elif", "preproc_elifdef"}


def _declared_name(decl: SyntaxNode, in_block: bool = False) -> tuple[SyntaxNode, str] | None:
    """Follow a declarator down to its identifier; returns (identifier, role).

    Inside a function body a function declarator is read as a variable with
    constructor arguments: ``std::vector<T> v(n, num_3)`` parses as a local
    function declaration once its literals have become identifiers.
    """
    is_array = False
    is_function = False
    node = decl
    while node.kind in _DECLARATOR_WRAPPERS:
        inner = None
        for child in node.children:
            if child.field == "declarator":
                inner = child
                break
        if inner is None:
            # reference_declarator has no field names on its child
            inner = next((c for c in node.children if c.named and c.kind != "attribute_declaration"), None)
            if inner is None:
                return None
        if node.kind == "array_declarator":
            is_array = True
        if node.kind == "function_declarator":
            is_function = inner.kind == "identifier" and not in_block
        node = inner
    if node.kind != "identifier":
        return None
    if is_function:
        return node, "function"
    return node, "array" if is_array else "variable"


def _scan_declarations(root: SyntaxNode) -> list[tuple[SyntaxNode, str]]:
    found = []
    stack = [(root, False)]
    while stack:
        node, in_block = stack.pop()
        kind = node.kind
        child_block = in_block or kind == "compound_statement"
        stack.extend((c, child_block) for c in reversed(node.children))
        if kind not in _DECLARING:
            continue
        for child in node.children:
            if child.field != "declarator":
                continue
            hit = (child, "variable") if child.kind == "identifier" else _declared_name(child, in_block and kind == "declaration")
            if hit is None:
                continue
            ident, role = hit
            if kind in ("parameter_declaration", "optional_parameter_declaration") and role == "variable":
                role = "parameter"
            found.append((ident, role))
    return found


_DECLARING = {
    "function_definition",
    "declaration",
    "for_range_loop",
    "parameter_declaration",
    "optional_parameter_declaration",
}


def _excluded_ranges(root: SyntaxNode) -> list[tuple[int, int]]:
    """Spans never anonymized: directive conditions, qualified names, linkage strings."""
    ranges = []
    for node in walk(root):
        if node.kind in _CONDITIONAL_DIRECTIVES:
            ranges.extend(c.span for c in node.children if c.field in ("condition", "name"))
        elif node.kind == "qualified_identifier":
            ranges.append(node.span)
        elif node.kind in ("linkage_specification", "gnu_asm_expression", "asm_statement"):
            ranges.extend(c.span for c in node.children if c.kind.endswith("string_literal"))
    return ranges


def _inside(node: SyntaxNode, ranges: list[tuple[int, int]]) -> bool:
    return any(a <= node.start and node.end <= b for a, b in ranges)


def _targets(tree: SyntaxTree, config: LseConfig):
    """Yield (node, text, role) for every replaceable leaf in source order."""
    numbers = config.anonymize_numbers and not config.compilable_mode
    strings = config.anonymize_strings and not config.compilable_mode
    declared: dict[str, str] = {}
    for ident, role in _scan_declarations(tree.root):
        declared.setdefault(ident.text, role)
    excluded = _excluded_ranges(tree.root)
    for node in walk(tree.root):
        if not node.is_leaf:
            continue
        role = declared.get(node.text)
        # a type_identifier naming a declared variable is a constructor argument
        # the parser took for a parameter type
        if role is not None and (
            node.kind == "identifier" or (node.kind == "type_identifier" and role != "function")
        ):
            if not _inside(node, excluded):
                yield node, node.text, role
        elif numbers and node.kind == "number_literal":
            if not _inside(node, excluded):
                yield node, node.text, "number"
        elif strings and node.kind in ("string_literal", "raw_string_literal"):
            if not _inside(node, excluded):
                yield node, node.text, "string"


def _replacement(role: str, suffix: int) -> str:
    token = f"{PREFIX[role]}_{suffix}"
    return f'"{token}"' if role == "string" else token


def build_anonymization_map(tree: SyntaxTree, config: LseConfig | None = None) -> AnonymizationMap:
    """Placeholders for every declared identifier, number and string in ``tree``.

    Identifiers without a declaration in the unit (library calls, macros) are
    left out.  Suffixes are assigned in first-occurrence order from a seeded
    generator, so the same (source, seed) always yields the same map.
    """
    config = config or LseConfig()
    amap = AnonymizationMap()
    gen = SuffixGenerator(config.suffix_range, config.seed)
    for _, text, role in _targets(tree, config):
        if role not in ("number", "string"):
            amap.declared.setdefault(text, role)
        key = (text, role)
        if key not in amap.entries:
            amap.entries[key] = _replacement(role, gen())
    return amap


def rewrites_for(tree: SyntaxTree, amap: AnonymizationMap, config: LseConfig | None = None) -> dict[SyntaxNode, str]:
    config = config or LseConfig()
    out = {}
    for node, text, role in _targets(tree, config):
        rep = amap.get(text, role)
        if rep is not None:
            out[node] = rep
    return out


def apply_lse_tree(tree: SyntaxTree, config: LseConfig | None = None) -> tuple[str, AnonymizationMap]:
    config = config or LseConfig()
    if tree.error_count > config.max_errors:
        raise LseRejected(f"{tree.error_count} syntax errors (threshold {config.max_errors})")
    amap = build_anonymization_map(tree, config)
    return regenerate(tree, rewrites_for(tree, amap, config)), amap


def apply_lse(source: str, language: str = "c", config: LseConfig | None = None) -> str:
    """Anonymized, comment-free, whitespace-normalized version of ``source``."""
    text, _ = apply_lse_tree(parse(source, language), config)
    return text
