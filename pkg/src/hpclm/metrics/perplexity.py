"""Perplexity and size-normalized perplexity."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence


class EmptySequence(ValueError):
    pass


class NonPositiveInput(ValueError):
    pass


@dataclass(frozen=True)
class PerplexityReport:
    token_count: int
    mean_nll: float
    perplexity: float
    params_billions: float | None = None
    normalized_perplexity: float | None = None


def perplexity(token_logprobs: Sequence[float], params_billions: float | None = None) -> PerplexityReport:
    """exp of the mean negative natural-log likelihood per token."""
    logprobs = list(token_logprobs)
    if not logprobs:
        raise EmptySequence("perplexity of an empty sequence")
    if any(lp > 0 for lp in logprobs):
        warnings.warn("positive log-probabilities in input", RuntimeWarning, stacklevel=2)
    mean_nll = -math.fsum(logprobs) / len(logprobs)
    ppl = math.exp(mean_nll)
    norm = normalized_perplexity(ppl, params_billions) if params_billions is not None else None
    return PerplexityReport(len(logprobs), mean_nll, ppl, params_billions, norm)


def normalized_perplexity(ppl: float, params_billions: float) -> float:
    """Perplexity scaled by model size in billions of parameters."""
    if ppl <= 0 or params_billions <= 0:
        raise NonPositiveInput(f"both inputs must be positive, got {ppl}, {params_billions}")
    return ppl * params_billions
