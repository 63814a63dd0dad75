"""C/C++ parsing, lexing and source regeneration.

The rest of the package only talks to this module, so the concrete parser
(tree-sitter) stays an implementation detail.  Trees are converted into plain
immutable :class:`SyntaxNode` objects right after parsing.
"""

from __future__ import annotations

import re
import threading
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

import tree_sitter
import tree_sitter_c
import tree_sitter_cpp

__all__ = [
    "LexToken",
    "ParseFailure",
    "RewriteConflict",
    "SyntaxNode",
    "SyntaxTree",
    "detokenize",
    "lex",
    "normalize_language",
    "parse",
    "regenerate",
    "walk",
    "token_texts",
]


class ParseFailure(Exception):
    """The parser could not produce any tree."""


class RewriteConflict(ValueError):
    """Two rewrites target overlapping spans."""


_LANG_ALIASES = {
    "c": "c",
    "h": "c",
    "cpp": "cpp",
    "c++": "cpp",
    "cxx": "cpp",
    "cc": "cpp",
}


def normalize_language(language: str) -> str:
    """Map user spellings ("C", "C++", "cpp", ...) onto ``"c"`` or ``"cpp"``."""
    try:
        return _LANG_ALIASES[language.strip().lower()]
    except KeyError:
        raise ValueError(f"unsupported language: {language!r}") from None


_TS_LANGUAGES = {
    "c": tree_sitter.Language(tree_sitter_c.language()),
    "cpp": tree_sitter.Language(tree_sitter_cpp.language()),
}
_local = threading.local()


def _parser(language: str) -> tree_sitter.Parser:
    # tree-sitter parsers are not safe to share between threads
    cache = getattr(_local, "parsers", None)
    if cache is None:
        cache = _local.parsers = {}
    if language not in cache:
        cache[language] = tree_sitter.Parser(_TS_LANGUAGES[language])
    return cache[language]


# Nodes whose internals are irrelevant downstream; they become leaves.
STRING_KINDS = frozenset({"string_literal", "char_literal", "raw_string_literal", "system_lib_string"})
DIRECTIVE_KINDS = frozenset({"preproc_include", "preproc_def", "preproc_function_def", "preproc_call"})
_COLLAPSE = STRING_KINDS | DIRECTIVE_KINDS


@dataclass(frozen=True, eq=False, slots=True)
class SyntaxNode:
    kind: str
    start: int
    end: int
    children: tuple[SyntaxNode, ...] = ()
    text: str = ""
    named: bool = True
    field: str | None = None

    @property
    def span(self) -> tuple[int, int]:
        return (self.start, self.end)

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def __repr__(self) -> str:
        if self.is_leaf:
            return f"SyntaxNode({self.kind!r}, {self.start}, {self.end}, text={self.text!r})"
        return f"SyntaxNode({self.kind!r}, {self.start}, {self.end}, {len(self.children)} children)"


@dataclass(frozen=True, eq=False)
class SyntaxTree:
    root: SyntaxNode
    source: str
    language: str
    error_count: int
    invalid_utf8: bool = False
    source_bytes: bytes = field(default=b"", repr=False)

    def functions(self) -> list[SyntaxNode]:
        """Function definitions that are not nested inside another function."""
        found = []
        stack = [self.root]
        while stack:
            node = stack.pop()
            if node.kind == "function_definition":
                found.append(node)
                continue
            stack.extend(reversed(node.children))
        return found

    def slice(self, node: SyntaxNode) -> str:
        return self.source_bytes[node.start : node.end].decode("utf-8", errors="replace")


def walk(node: SyntaxNode) -> Iterator[SyntaxNode]:
    """Pre-order traversal, node included."""
    stack = [node]
    while stack:
        n = stack.pop()
        yield n
        if n.children:
            stack.extend(reversed(n.children))


def parse(source: str | bytes, language: str = "c", *, reject_empty: bool = False) -> SyntaxTree:
    """Parse C or C++ source.  Syntax errors are counted, never raised."""
    language = normalize_language(language)
    invalid = False
    if isinstance(source, bytes):
        text = source.decode("utf-8", errors="replace")
        invalid = text.encode("utf-8") != source
    else:
        text = source
    if reject_empty and not text.strip():
        raise ParseFailure("empty input")
    data = text.encode("utf-8", errors="replace")
    ts_tree = _parser(language).parse(data)
    if ts_tree is None:  # pragma: no cover - only on parser timeout/cancel
        raise ParseFailure("parser returned no tree")
    root, errors = _convert(ts_tree.root_node, data)
    root = SyntaxNode(root.kind, 0, len(data), root.children, root.text, root.named)
    return SyntaxTree(root, text, language, errors, invalid, data)


def _convert(ts_root, data: bytes) -> tuple[SyntaxNode, int]:
    errors = 0
    # post-order over the tree-sitter tree without recursion
    stack = [(ts_root, None, False)]
    built: list[list[SyntaxNode]] = [[]]
    while stack:
        node, fname, expanded = stack.pop()
        if not expanded:
            if node.is_missing:
                errors += 1
                continue
            if node.is_error:
                errors += 1
            if node.child_count == 0 or node.type in _COLLAPSE:
                built[-1].append(
                    SyntaxNode(
                        node.type,
                        node.start_byte,
                        node.end_byte,
                        (),
                        data[node.start_byte : node.end_byte].decode("utf-8", errors="replace"),
                        node.is_named,
                        fname,
                    )
                )
                if node.type in _COLLAPSE and node.has_error:
                    errors += sum(1 for _ in _ts_errors(node))
                continue
            stack.append((node, fname, True))
            built.append([])
            kids = node.children
            for i in range(len(kids) - 1, -1, -1):
                stack.append((kids[i], node.field_name_for_child(i), False))
        else:
            kids = built.pop()
            built[-1].append(
                SyntaxNode(node.type, node.start_byte, node.end_byte, tuple(kids), "", node.is_named, fname)
            )
    (root,) = built[0]
    return root, errors


def _ts_errors(node):
    stack = list(node.children)
    while stack:
        n = stack.pop()
        if n.is_error or n.is_missing:
            yield n
        stack.extend(n.children)


# --------------------------------------------------------------------------- lexing

C_KEYWORDS = frozenset(
    """
    auto break case char const continue default do double else enum extern float for goto if
    inline int long register restrict return short signed sizeof static struct switch typedef
    union unsigned void volatile while _Alignas _Alignof _Atomic _Bool _Complex _Generic
    _Imaginary _Noreturn _Static_assert _Thread_local
    """.split()
)
CPP_KEYWORDS = C_KEYWORDS | frozenset(
    """
    alignas alignof and and_eq asm bitand bitor bool catch char8_t char16_t char32_t class compl
    concept consteval constexpr constinit const_cast co_await co_return co_yield decltype delete
    dynamic_cast explicit export false friend mutable namespace new noexcept not not_eq nullptr
    operator or or_eq private protected public reinterpret_cast requires static_assert
    static_cast template this thread_local throw true try typeid typename using virtual
    wchar_t xor xor_eq
    """.split()
)
KEYWORDS = CPP_KEYWORDS

_PUNCTUATORS = sorted(
    """
    ... <<= >>= <=> ->* -> ++ -- << >> <= >= == != && || += -= *= /= %= &= |= ^= :: ## .*
    { } [ ] ( ) ; : , . ? ~ ! + - * / % ^ & | = < > #
    """.split(),
    key=len,
    reverse=True,
)

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\f\v\r]+|\\\r?\n)
  | (?P<nl>\n)
  | (?P<comment>//(?:[^\n\\]|\\(?:.|\n))*|/\*(?s:.*?)(?:\*/|\Z))
  | (?P<raw>(?:u8|u|U|L)?R"(?P<delim>[^\s()\\]{0,16})\((?s:.*?)\)(?P=delim)")
  | (?P<string>(?:u8|u|U|L)?"(?:[^"\\\n]|\\(?:.|\n))*")
  | (?P<char>(?:u8|u|U|L)?'(?:[^'\\\n]|\\(?:.|\n))+')
  | (?P<number>\.?\d(?:[eEpP][+-]|'(?=\w)|[\w.])*)
  | (?P<ident>[^\W\d]\w*)
  | (?P<punct>"""
    + "|".join(re.escape(p) for p in _PUNCTUATORS)
    + r""")
  | (?P<other>.)
    """,
    re.VERBOSE,
)
_DIRECTIVE_RE = re.compile(r"#[ \t]*([A-Za-z_]\w*)")
_SUFFIX_RE = re.compile(r"^(\w*[A-Za-z0-9])_(\d+)$")
_IDENT_START = re.compile(r"[^\W\d]")


@dataclass(frozen=True, slots=True)
class LexToken:
    text: str
    category: str  # keyword | identifier | number | string | punctuation | pragma | other
    span: tuple[int, int]


def _split_suffix(text: str) -> list[str]:
    tail: list[str] = []
    while m := _SUFFIX_RE.match(text):
        tail[:0] = ["_", m.group(2)]
        text = m.group(1)
    return [text] + tail


def lex(source: str, language: str = "c", *, split_suffix: bool = True) -> list[LexToken]:
    """Lexical tokens of ``source``; comments and whitespace are dropped.

    With ``split_suffix`` an identifier ending in ``_<digits>`` is emitted as
    ``name``, ``_``, ``digits`` (so ``func_252`` becomes three tokens).
    ``#pragma`` lines yield one token per word, all with category ``pragma``.
    """
    keywords = C_KEYWORDS if normalize_language(language) == "c" else CPP_KEYWORDS
    offsets = None if source.isascii() else _byte_offsets(source)
    tokens: list[LexToken] = []
    pos = 0
    n = len(source)
    line_start = True
    pragma_line = False

    def span(a: int, b: int) -> tuple[int, int]:
        if offsets is None:
            return (a, b)
        return (offsets[a], offsets[b])

    while pos < n:
        if line_start and source[pos] == "#":
            m = _DIRECTIVE_RE.match(source, pos)
            if m:
                name = m.group(1)
                pragma_line = name == "pragma"
                tokens.append(LexToken("#" + name, "pragma" if pragma_line else "keyword", span(pos, m.end())))
                pos = m.end()
                line_start = False
                continue
        m = _TOKEN_RE.match(source, pos)
        kind = m.lastgroup
        if kind == "delim":  # pragma: no cover - named group inside raw
            kind = "raw"
        text = m.group()
        start, pos = pos, m.end()
        if kind == "nl":
            line_start = True
            pragma_line = False
            continue
        if kind == "ws":
            continue
        if kind == "comment":
            continue
        line_start = False
        if kind == "ident":
            parts = _split_suffix(text) if split_suffix else [text]
            cursor = start
            for part in parts:
                cat = "keyword" if part in keywords else ("number" if part.isdigit() else "identifier")
                if pragma_line:
                    cat = "pragma"
                tokens.append(LexToken(part, cat, span(cursor, cursor + len(part))))
                cursor += len(part)
            continue
        if kind == "raw" or kind == "string" or kind == "char":
            cat = "string"
        elif kind == "number":
            cat = "number"
        elif kind == "punct":
            cat = "punctuation"
        else:
            cat = "other"
        if pragma_line:
            cat = "pragma"
        tokens.append(LexToken(text, cat, span(start, pos)))
    return tokens


def _byte_offsets(source: str) -> list[int]:
    out = [0]
    total = 0
    for ch in source:
        total += len(ch.encode("utf-8", errors="replace"))
        out.append(total)
    return out


def token_texts(source: str, language: str = "c", *, split_suffix: bool = True) -> list[str]:
    return [t.text for t in lex(source, language, split_suffix=split_suffix)]


# --------------------------------------------------------------------------- regeneration

_NO_SPACE_BEFORE = frozenset({")", "]", ";", ",", ".", "->", "::", ".*", "->*"})
_NO_SPACE_AFTER = frozenset({"(", "[", ".", "->", "::", "~", "!", ".*", "->*"})
_SPACED_KEYWORDS = KEYWORDS - {"sizeof", "alignof", "_Alignof", "decltype", "typeid", "noexcept", "this"}
_POSTFIX = frozenset({"++", "--"})


def _is_wordish(tok: str) -> bool:
    return bool(tok) and (tok[-1].isalnum() or tok[-1] == "_")


def _need_space(prev: str, nxt: str) -> bool:
    glue = False
    if nxt in _NO_SPACE_BEFORE or prev in _NO_SPACE_AFTER:
        glue = True
    elif nxt in ("(", "[") and (prev in (")", "]") or (_is_wordish(prev) and prev not in _SPACED_KEYWORDS)):
        glue = True
    elif nxt in _POSTFIX and (prev in (")", "]") or (_is_wordish(prev) and prev not in KEYWORDS)):
        glue = True
    if not glue:
        return True
    # never glue two tokens into something that lexes differently
    joined = _TOKEN_RE.match(prev + nxt)
    return joined is None or joined.end() != len(prev) or _is_wordish(prev) and nxt[:1].isalnum()


def _is_directive_token(text: str) -> bool:
    return len(text) > 1 and text[0] == "#" and (text[1].isalpha() or text[1] in " \t")


_DIRECTIVE_PIECE_RE = re.compile(
    r"""
    (?P<str>"(?:[^"\\\n]|\\.)*"|'(?:[^'\\\n]|\\.)*')
  | (?P<comment>//[^\n]*|/\*(?s:.*?)(?:\*/|\Z))
  | (?P<cont>[ \t]*\\\r?\n[ \t]*)
  | (?P<ws>[ \t\f\v\r\n]+)
  | (?P<other>[^"'/\\ \t\f\v\r\n]+|.)
    """,
    re.VERBOSE,
)


def normalize_directive(text: str) -> str:
    """Strip comments and squeeze blanks in a preprocessor line (continuations kept)."""
    out = []
    for m in _DIRECTIVE_PIECE_RE.finditer(text):
        kind = m.lastgroup
        if kind in ("comment", "ws"):
            out.append(" ")
        elif kind == "cont":
            out.append(" \\\n")
        else:
            out.append(m.group())
    result = re.sub(r" {2,}", " ", "".join(out)).strip()
    result = re.sub(r" *\\\n *(?:\\\n *)*$", "", result)
    result = re.sub(r"^#\s+", "#", result)
    return result.rstrip(" \\")


def regenerate(tree: SyntaxTree, rewrites: Mapping[SyntaxNode, str] | None = None) -> str:
    """Emit canonical source for ``tree`` with ``rewrites`` substituted.

    Comments are dropped.  Tokens are separated by one space (none around
    brackets, member access and separators); a newline follows ``;`` (outside
    parentheses), ``{`` and ``}``.  Preprocessor lines stay on lines of their own.
    """
    rewrites = dict(rewrites or {})
    _check_conflicts(rewrites)
    pieces: list[tuple[str, SyntaxNode]] = []
    seen = 0
    stack = [tree.root]
    while stack:
        node = stack.pop()
        if node in rewrites:
            seen += 1
            pieces.append((rewrites[node], node))
            continue
        if node.kind == "comment":
            continue
        if node.is_leaf:
            if node.text:
                pieces.append((node.text, node))
            continue
        stack.extend(reversed(node.children))
    if seen != len(rewrites):
        raise ValueError("rewrite target is not a node of this tree")
    return _layout(pieces, tree.source_bytes)


def _check_conflicts(rewrites: Mapping[SyntaxNode, str]) -> None:
    spans = sorted(((n.start, -n.end, n) for n in rewrites), key=lambda t: (t[0], t[1]))
    prev_end = -1
    for start, neg_end, node in spans:
        if start < prev_end:
            raise RewriteConflict(f"rewrite of {node!r} overlaps another rewrite")
        prev_end = max(prev_end, -neg_end)


def _layout(pieces: Sequence[tuple[str, SyntaxNode]], data: bytes) -> str:
    lines: list[str] = []
    cur: list[str] = []
    prev_text = ""
    prev_end = 0
    paren = 0
    directive = False

    def newline():
        nonlocal prev_text
        if cur:
            lines.append("".join(cur))
            cur.clear()
        prev_text = ""

    for text, node in pieces:
        if directive and b"\n" in re.sub(rb"\\\r?\n", b"", data[prev_end : node.start]):
            newline()
            directive = False
        if node.kind in DIRECTIVE_KINDS:
            newline()
            cur.append(normalize_directive(text))
            newline()
            prev_end = node.end
            continue
        if _is_directive_token(text):
            newline()
            directive = True
        if cur and prev_text and _need_space(prev_text, text):
            cur.append(" ")
        cur.append(text)
        prev_text = text
        prev_end = node.end
        if directive:
            continue
        if text == "(":
            paren += 1
        elif text == ")":
            paren = max(0, paren - 1)
        if text in ("{", "}") or (text == ";" and paren == 0):
            newline()
    newline()
    return "\n".join(lines) + "\n" if lines else ""


# --------------------------------------------------------------------------- detokenization

# Words that may continue an OpenMP directive line.
OPENMP_WORDS = frozenset(
    """
    omp parallel for do simd sections section single master masked critical barrier taskwait
    taskyield taskgroup atomic flush ordered task taskloop target teams distribute loop data
    enter exit update declare reduction threadprivate cancel cancellation point scan depobj
    requires metadirective tile unroll end private firstprivate lastprivate shared default
    copyin copyprivate schedule collapse nowait num_threads if proc_bind linear aligned
    safelen simdlen uniform inbranch notinbranch map device is_device_ptr use_device_ptr
    num_teams thread_limit dist_schedule depend priority grainsize num_tasks nogroup final
    untied mergeable in_reduction task_reduction allocate hint read write capture seq_cst
    acq_rel release acquire relaxed none static dynamic guided runtime auto nontemporal order
    concurrent bind full partial sizes monotonic nonmonotonic
    """.split()
)


def _directive_extent(tokens: Sequence[str], i: int) -> int:
    """Index one past the last token of the directive line starting at ``i``."""
    head = tokens[i]
    n = len(tokens)
    j = i + 1
    if head in ("#else", "#endif"):
        return j
    if head in ("#ifdef", "#ifndef", "#undef", "#elifdef", "#elifndef", "#error", "#line", "#warning"):
        return min(n, j + 1)
    if head == "#include":
        if j < n and tokens[j] == "<":
            while j < n and tokens[j] != ">":
                j += 1
            return min(n, j + 1)
        return min(n, j + 1)
    if head == "#define":
        j = min(n, j + 1)
        if j < n and tokens[j] == "(":
            while j < n and tokens[j] != ")":
                j += 1
            j = min(n, j + 1)
        return min(n, j + 1)
    if head == "#pragma":
        omp = j < n and tokens[j] == "omp"
        if not omp:
            j = min(n, j + 1)
        depth = 0
        while j < n:
            t = tokens[j]
            if depth:
                depth += (t == "(") - (t == ")")
            elif t == "(":
                depth = 1
            elif t in (",", ":"):
                pass
            elif omp and t in OPENMP_WORDS and not (t == "for" and j + 1 < n and tokens[j + 1] == "("):
                pass
            else:
                break
            j += 1
        return j
    # #if / #elif: a constant expression
    depth = 0
    prev_operand = False
    while j < n:
        t = tokens[j]
        operand = _is_wordish(t) or t[:1] in "\"'"
        if depth:
            depth += (t == "(") - (t == ")")
        elif t == "(":
            depth = 1
        elif t in ("{", "}", ";") or (t in KEYWORDS and t != "defined"):
            break
        elif operand and prev_operand:
            break
        prev_operand = operand
        j += 1
    return j


def detokenize(tokens: Sequence[str], *, with_offsets: bool = False):
    """Join lexical tokens back into source text.

    Tokens are joined by single spaces, except that ``name _ 12`` triples are
    fused back into ``name_12`` and preprocessor directives get lines of their
    own.  With ``with_offsets`` the character offset of every token is returned
    as well.
    """
    tokens = list(tokens)
    parts: list[str] = []
    offsets: list[int] = []
    length = 0
    word = ""  # identifier currently being emitted, for suffix fusing
    directive_end = -1
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if (
            tok == "_"
            and word
            and i + 1 < len(tokens)
            and tokens[i + 1].isdigit()
            and i != directive_end
            and i + 1 != directive_end
            and _SUFFIX_RE.match(word + "_" + tokens[i + 1])
        ):
            offsets += [length, length + 1]
            fused = "_" + tokens[i + 1]
            parts.append(fused)
            length += len(fused)
            word += fused
            i += 2
            continue
        if not parts:
            sep = ""
        elif i == directive_end or _is_directive_token(tok):
            sep = "\n"
        else:
            sep = " "
        if _is_directive_token(tok):
            directive_end = _directive_extent(tokens, i)
        parts.append(sep + tok)
        offsets.append(length + len(sep))
        length += len(sep) + len(tok)
        word = tok if _IDENT_START.match(tok) else ""
        i += 1
    text = "".join(parts)
    if with_offsets:
        return text, offsets
    return text
