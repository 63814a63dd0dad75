"""Token n-gram language model used as the built-in baseline.

Two scoring rules share one set of counts:

* ``logprobs`` uses additive smoothing at the longest context that was seen in
  training, falling back to shorter contexts otherwise.  Every context
  therefore gets a proper distribution, which perplexity needs.
* ``generate`` ranks candidates with stupid backoff, which is cheap and only
  needs relative scores.
"""

from __future__ import annotations

import json
import math
import random
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"


def _tie_key(token: str) -> tuple[bool, str]:
    # lexicographic, except that stopping loses every tie
    return (token == EOS, token)


class EmptyCorpus(ValueError):
    pass


class EmptySequence(ValueError):
    pass


@dataclass
class NgramModel:
    order: int = 4
    smoothing_k: float = 0.01
    backoff_factor: float = 0.4
    seed: int = 0
    # counts[h][w] for every context length 0..order-1; h is a tuple of tokens
    counts: dict[tuple[str, ...], Counter] = field(default_factory=dict)
    vocab: frozenset[str] = frozenset()

    def __post_init__(self):
        self._totals = {h: sum(c.values()) for h, c in self.counts.items()}
        self._ranked: dict[tuple[str, ...], list[tuple[str, int]]] = {}

    @property
    def vocab_size(self) -> int:
        """Size of the predicted-token set: training tokens, end marker and unknown."""
        return len(self.vocab | {EOS, UNK})

    def _context(self, history: Sequence[str]) -> tuple[str, ...]:
        padded = [BOS] * (self.order - 1) + list(history)
        return tuple(padded[len(padded) - (self.order - 1) :]) if self.order > 1 else ()

    # ------------------------------------------------------------------ probabilities

    def prob(self, token: str, history: Sequence[str]) -> float:
        """Smoothed P(token | history) under the longest seen context."""
        if token not in self.vocab and token != EOS:
            token = UNK
        ctx = self._context(history)
        k = self.smoothing_k
        v = self.vocab_size
        for start in range(len(ctx) + 1):
            h = ctx[start:]
            total = self._totals.get(h, 0)
            if total:
                return (self.counts[h].get(token, 0) + k) / (total + k * v)
        return 1.0 / v

    def distribution(self, history: Sequence[str]) -> dict[str, float]:
        """Full next-token distribution (sums to one over the vocabulary)."""
        items = sorted(self.vocab | {EOS, UNK})
        return {w: self.prob(w, history) for w in items}

    # ------------------------------------------------------------------ generation scores

    def backoff_scores(self, history: Sequence[str]) -> dict[str, float]:
        """Stupid-backoff score of every vocabulary token after ``history``.

        An unseen context gets ``backoff_factor`` times the scores of the next
        shorter context.
        """
        ctx = self._context(history)
        return self._backoff(ctx)

    def _backoff(self, h: tuple[str, ...]) -> dict[str, float]:
        if h:
            lower = self._backoff(h[1:])
            scaled = {w: self.backoff_factor * s for w, s in lower.items()}
            total = self._totals.get(h, 0)
            if total:
                for w, c in self.counts[h].items():
                    scaled[w] = c / total
            return scaled
        total = self._totals.get((), 0)
        base = {w: 0.0 for w in self.vocab | {EOS}}
        if total:
            for w, c in self.counts[()].items():
                base[w] = c / total
        return base

    def _ranked_at(self, h: tuple[str, ...]) -> list[tuple[str, int]]:
        ranked = self._ranked.get(h)
        if ranked is None:
            ranked = sorted(self.counts[h].items(), key=lambda wc: (-wc[1], _tie_key(wc[0])))
            self._ranked[h] = ranked
        return ranked

    def _greedy_next(self, ctx: tuple[str, ...]) -> str | None:
        best_score = -1.0
        best_tok = None
        scale = 1.0
        seen: set[str] = set()
        for start in range(len(ctx) + 1):
            h = ctx[start:]
            total = self._totals.get(h, 0)
            if total:
                if best_tok is not None and best_score > scale:
                    break
                for w, c in self._ranked_at(h):
                    if w in seen:
                        continue
                    seen.add(w)
                    s = scale * c / total
                    if s > best_score or (s == best_score and _tie_key(w) < _tie_key(best_tok)):
                        best_score, best_tok = s, w
            scale *= self.backoff_factor
        return best_tok

    def generate(
        self,
        prompt: Sequence[str],
        max_new_tokens: int,
        temperature: float = 0.0,
        seed: int | None = None,
    ) -> list[str]:
        """Greedy (temperature 0) or seeded sampled continuation of ``prompt``."""
        if max_new_tokens < 0:
            raise ValueError("max_new_tokens must be >= 0")
        rng = random.Random(self.seed if seed is None else seed)
        history = list(prompt)
        out: list[str] = []
        while len(out) < max_new_tokens:
            ctx = self._context(history)
            if temperature <= 0:
                tok = self._greedy_next(ctx)
            else:
                scores = self._backoff(ctx)
                cands = sorted(w for w, s in scores.items() if s > 0)
                if not cands:
                    break
                weights = [scores[w] ** (1.0 / temperature) for w in cands]
                tok = rng.choices(cands, weights)[0]
            if tok is None or tok == EOS:
                break
            out.append(tok)
            history.append(tok)
        return out

    # ------------------------------------------------------------------ scoring

    def logprobs(self, tokens: Sequence[str]) -> list[float]:
        """Natural-log probability of each token given its predecessors."""
        if not tokens:
            raise EmptySequence("no tokens to score")
        out = []
        for i, tok in enumerate(tokens):
            out.append(math.log(self.prob(tok, tokens[:i] if i < self.order else tokens[i - self.order + 1 : i])))
        return out

    # ------------------------------------------------------------------ persistence

    def to_json(self) -> dict:
        return {
            "order": self.order,
            "smoothing_k": self.smoothing_k,
            "backoff_factor": self.backoff_factor,
            "seed": self.seed,
            "vocab": sorted(self.vocab),
            "counts": [
                [list(h), sorted(c.items())] for h, c in sorted(self.counts.items(), key=lambda hc: (len(hc[0]), hc[0]))
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> NgramModel:
        counts = {tuple(h): Counter(dict((w, int(n)) for w, n in items)) for h, items in obj["counts"]}
        return cls(
            order=int(obj["order"]),
            smoothing_k=float(obj["smoothing_k"]),
            backoff_factor=float(obj["backoff_factor"]),
            seed=int(obj.get("seed", 0)),
            counts=counts,
            vocab=frozenset(obj["vocab"]),
        )

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, ensure_ascii=False, separators=(",", ":"))

    @classmethod
    def load(cls, path: str | Path) -> NgramModel:
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def train_ngram(
    sequences: Iterable[Sequence[str]],
    order: int = 4,
    smoothing_k: float = 0.01,
    backoff_factor: float = 0.4,
    seed: int = 0,
) -> NgramModel:
    """Count every n-gram of length 1..order, with begin/end sentinels."""
    if order < 1:
        raise ValueError("order must be >= 1")
    counts: dict[tuple[str, ...], Counter] = defaultdict(Counter)
    vocab: set[str] = set()
    n_seq = 0
    for seq in sequences:
        seq = list(seq)
        if not seq:
            continue
        n_seq += 1
        vocab.update(seq)
        padded = [BOS] * (order - 1) + seq + [EOS]
        for i in range(order - 1, len(padded)):
            w = padded[i]
            for n in range(order):
                counts[tuple(padded[i - n : i])][w] += 1
    if not n_seq:
        raise EmptyCorpus("no non-empty training sequences")
    return NgramModel(order, smoothing_k, backoff_factor, seed, dict(counts), frozenset(vocab))
