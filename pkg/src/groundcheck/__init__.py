"""groundcheck: hallucination detection for retrieval-augmented generation.

Encodes (context, question, answer) triples, scores each answer token for
groundedness with a pluggable classifier backend, aggregates token
probabilities into hallucinated character spans, and evaluates detectors
with example-level and character-overlap span-level metrics.
"""

__version__ = "0.1.0"

from groundcheck.corpus import (
    AnnotatedExample,
    CorpusStats,
    GoldSpan,
    HallucinationType,
    Split,
    TaskType,
    corpus_stats,
    filter_split,
    load_corpus,
    load_normalized,
    save_corpus,
)
from groundcheck.detection import (
    DetectionResult,
    GraphBackend,
    HallucinationSpan,
    MockBackend,
    RemoteBackend,
    TokenScores,
    aggregate_token_ranges,
    backend_from_spec,
    detect,
    detect_batch,
)
from groundcheck.encoding import (
    IGNORE_LABEL,
    EncodedSequence,
    Segment,
    WhitespaceTokenizer,
    assemble,
    encode_example,
    labeled_sequence,
    load_tokenizer,
    project_labels,
    token_range_to_char_span,
)
from groundcheck.metrics import EvalReport, PRF, evaluate, example_level_prf, f1, span_level_prf

__all__ = [
    "AnnotatedExample",
    "CorpusStats",
    "DetectionResult",
    "EncodedSequence",
    "EvalReport",
    "GoldSpan",
    "GraphBackend",
    "HallucinationSpan",
    "HallucinationType",
    "IGNORE_LABEL",
    "MockBackend",
    "PRF",
    "RemoteBackend",
    "Segment",
    "Split",
    "TaskType",
    "TokenScores",
    "WhitespaceTokenizer",
    "aggregate_token_ranges",
    "assemble",
    "backend_from_spec",
    "corpus_stats",
    "detect",
    "detect_batch",
    "encode_example",
    "evaluate",
    "example_level_prf",
    "f1",
    "filter_split",
    "labeled_sequence",
    "load_corpus",
    "load_normalized",
    "load_tokenizer",
    "project_labels",
    "save_corpus",
    "span_level_prf",
    "token_range_to_char_span",
]
