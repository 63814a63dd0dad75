"""Parameter and memory budgets for decoder-only transformers."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction


def estimate_params(
    layers: int,
    hidden_dim: int,
    heads: int,
    vocab: int,
    context_len: int,
    tied_embeddings: bool = False,
) -> int:
    """GPT-style parameter count, biases and layer norms included.

    Per layer: QKV and output projections (4d^2 + 4d), a 4x MLP (8d^2 + 5d) and
    two layer norms (4d).  Token and learned position embeddings plus the final
    layer norm come on top; an untied output head adds another vocab x d.
    ``heads`` does not change the count.
    """
    d = hidden_dim
    total = vocab * d + context_len * d + layers * (12 * d * d + 13 * d) + 2 * d
    if not tied_embeddings:
        total += vocab * d
    return total


def estimate_ram(param_count: int | float, bytes_per_param: int = 4) -> int:
    """Bytes needed to hold the weights; exact integer arithmetic."""
    if param_count < 0 or bytes_per_param <= 0:
        raise ValueError("param_count must be >= 0 and bytes_per_param > 0")
    total = Fraction(param_count) * bytes_per_param
    if total.denominator != 1:
        raise ValueError(f"fractional byte count: {param_count} x {bytes_per_param}")
    return int(total)


def format_gb(n_bytes: int) -> str:
    """Decimal gigabytes (10^9 bytes)."""
    value = Fraction(n_bytes, 10**9)
    return f"{float(value):g} GB"


@dataclass(frozen=True)
class ModelBudget:
    layers: int
    hidden_dim: int
    heads: int
    vocab: int
    context_len: int
    tied_embeddings: bool = False
    bytes_per_param: int = 4

    @property
    def param_count(self) -> int:
        return estimate_params(self.layers, self.hidden_dim, self.heads, self.vocab, self.context_len, self.tied_embeddings)

    @property
    def ram_bytes(self) -> int:
        return estimate_ram(self.param_count, self.bytes_per_param)
