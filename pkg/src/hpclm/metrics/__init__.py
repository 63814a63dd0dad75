from .budget import ModelBudget, estimate_params, estimate_ram, format_gb
from .codebleu import (
    CodeBleuScore,
    EmptyReference,
    ReferenceUnparseable,
    ast_match,
    bleu,
    codebleu,
    combine,
    dataflow_edges,
    dataflow_match,
    weighted_ngram_match,
)
from .perplexity import EmptySequence, NonPositiveInput, PerplexityReport, normalized_perplexity, perplexity
