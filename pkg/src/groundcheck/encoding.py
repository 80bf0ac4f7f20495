"""Classifier input assembly and token/character offset alignment.

The input layout is one flat token sequence per example:

    [CLS] context-block [SEP] question [SEP] answer [SEP]

Context passages are joined with a single newline. Answer tokens carry
character offsets into the original answer string, so spans can be projected
from characters to token labels and back without ever detokenizing.
Context/question tokens are supervision-masked with the -100 sentinel;
answer tokens are labeled 0 (supported) or 1 (hallucinated).
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable, Protocol, Sequence, runtime_checkable

IGNORE_LABEL = -100

# Structural token budget: one sequence-start plus three separators.
NUM_SPECIAL_TOKENS = 4

DEFAULT_MAX_LENGTH = 4096


class Segment(str, Enum):
    Special = "special"
    Context = "context"
    Question = "question"
    Answer = "answer"


class EncodingError(ValueError):
    """Input cannot be assembled under the requested constraints."""


class AnswerTooLongError(EncodingError):
    """The answer alone (plus special tokens) exceeds max_length."""


@runtime_checkable
class Tokenizer(Protocol):
    """Subword vocabulary handle.

    ``encode`` returns parallel lists of token ids and half-open character
    offsets into the input text. Offsets must be non-overlapping and
    monotonically non-decreasing. The engine never detokenizes; every piece
    of surface text is recovered by slicing original strings with offsets.
    """

    name: str

    def encode(self, text: str) -> tuple[list[int], list[tuple[int, int]]]: ...

    @property
    def seq_start_id(self) -> int: ...

    @property
    def separator_id(self) -> int: ...


class WhitespaceTokenizer:
    """Deterministic test tokenizer: one token per whitespace-delimited word.

    Token ids are stable CRC32 hashes of the token text, so no vocabulary
    file is needed and results are identical across runs and platforms.
    """

    PAD_ID = 0
    CLS_ID = 1
    SEP_ID = 2
    _ID_SPACE = 1_000_003  # prime; hashed ids land in [4, 4 + _ID_SPACE)

    name = "whitespace"

    def encode(self, text: str) -> tuple[list[int], list[tuple[int, int]]]:
        ids: list[int] = []
        offsets: list[tuple[int, int]] = []
        start = None
        for i, ch in enumerate(text):
            if ch.isspace():
                if start is not None:
                    offsets.append((start, i))
                    start = None
            elif start is None:
                start = i
        if start is not None:
            offsets.append((start, len(text)))
        for s, e in offsets:
            token = text[s:e]
            ids.append(4 + zlib.crc32(token.encode("utf-8")) % self._ID_SPACE)
        return ids, offsets

    @property
    def seq_start_id(self) -> int:
        return self.CLS_ID

    @property
    def separator_id(self) -> int:
        return self.SEP_ID


class SubwordTokenizer:
    """Wraps a single-file subword tokenizer definition (tokenizer.json)."""

    _SEQ_START_CANDIDATES = ("[CLS]", "<s>", "<cls>", "<bos>")
    _SEPARATOR_CANDIDATES = ("[SEP]", "</s>", "<sep>", "<eos>")

    def __init__(self, path: str):
        try:
            from tokenizers import Tokenizer as _HFTokenizer
        except ImportError as exc:  # pragma: no cover
            raise EncodingError(
                "the 'tokenizers' package is required to load tokenizer definition files"
            ) from exc
        self._tok = _HFTokenizer.from_file(str(path))
        self.name = f"file:{path}"
        self._seq_start = self._lookup(self._SEQ_START_CANDIDATES, "sequence-start")
        self._separator = self._lookup(self._SEPARATOR_CANDIDATES, "separator")

    def _lookup(self, candidates: tuple[str, ...], role: str) -> int:
        for token in candidates:
            token_id = self._tok.token_to_id(token)
            if token_id is not None:
                return token_id
        raise EncodingError(
            f"tokenizer has no {role} token (tried {', '.join(candidates)})"
        )

    def encode(self, text: str) -> tuple[list[int], list[tuple[int, int]]]:
        enc = self._tok.encode(text, add_special_tokens=False)
        return list(enc.ids), [tuple(o) for o in enc.offsets]

    @property
    def seq_start_id(self) -> int:
        return self._seq_start

    @property
    def separator_id(self) -> int:
        return self._separator


def load_tokenizer(spec: str) -> Tokenizer:
    """Build a tokenizer from a spec string: "whitespace" or a file path."""
    if spec == "whitespace":
        return WhitespaceTokenizer()
    return SubwordTokenizer(spec)


@dataclass(frozen=True)
class EncodedSequence:
    """One assembled classifier input with full offset bookkeeping.

    ``answer_offsets[i]`` is a (start, end) character interval into
    ``answer_text`` iff ``segments[i]`` is Answer, else None. ``labels`` are
    -100 outside the answer; answer labels default to 0 until
    :func:`project_labels` stamps gold spans (``has_gold_labels`` records
    whether that happened).
    """

    token_ids: tuple[int, ...]
    segments: tuple[Segment, ...]
    answer_offsets: tuple[tuple[int, int] | None, ...]
    labels: tuple[int, ...]
    truncated: bool
    example_id: str
    question_text: str
    context_text: str
    answer_text: str
    has_gold_labels: bool = False

    def __post_init__(self):
        n = len(self.token_ids)
        if not (len(self.segments) == len(self.labels) == len(self.answer_offsets) == n):
            raise ValueError("token_ids, segments, labels, answer_offsets must be parallel")
        for seg, lab, off in zip(self.segments, self.labels, self.answer_offsets):
            if seg is Segment.Answer:
                if lab not in (0, 1) or off is None:
                    raise ValueError("answer tokens need a 0/1 label and an offset")
            elif lab != IGNORE_LABEL or off is not None:
                raise ValueError("non-answer tokens must be masked and offset-free")

    def __len__(self) -> int:
        return len(self.token_ids)

    @property
    def answer_token_indices(self) -> list[int]:
        return [i for i, seg in enumerate(self.segments) if seg is Segment.Answer]


def _encode_segments(question, contexts, answer, tokenizer):
    if not contexts:
        raise EncodingError("contexts must be non-empty")
    if not answer:
        raise EncodingError("answer must be non-empty")
    context_text = "\n".join(contexts)
    ctx_ids, _ = tokenizer.encode(context_text)
    q_ids, _ = tokenizer.encode(question)
    ans_ids, ans_offsets = tokenizer.encode(answer)
    if not ans_ids:
        raise EncodingError("answer must contain at least one token")
    return context_text, ctx_ids, q_ids, ans_ids, ans_offsets


def assembled_length(question, contexts, answer, tokenizer, max_length: int | None = None) -> int:
    """Token length of the assembled sequence; untruncated unless max_length given."""
    _, ctx_ids, q_ids, ans_ids, _ = _encode_segments(question, contexts, answer, tokenizer)
    total = NUM_SPECIAL_TOKENS + len(ctx_ids) + len(q_ids) + len(ans_ids)
    return total if max_length is None else min(total, max_length)


def assemble(
    question: str,
    contexts: Sequence[str],
    answer: str,
    tokenizer: Tokenizer,
    max_length: int = DEFAULT_MAX_LENGTH,
    example_id: str = "",
) -> EncodedSequence:
    """Build the [CLS] contexts [SEP] question [SEP] answer [SEP] sequence.

    If the result would exceed ``max_length``, context tokens are dropped
    from the end of the context block until it fits; the question and answer
    are never truncated. Raises AnswerTooLongError when the answer plus
    special tokens alone cannot fit, and EncodingError when question+answer
    cannot fit even with the whole context block dropped.
    """
    context_text, ctx_ids, q_ids, ans_ids, ans_offsets = _encode_segments(
        question, contexts, answer, tokenizer
    )
    if NUM_SPECIAL_TOKENS + len(ans_ids) > max_length:
        raise AnswerTooLongError(
            f"answer too long: {len(ans_ids)} answer tokens + {NUM_SPECIAL_TOKENS} "
            f"special tokens exceed max_length={max_length}"
        )
    ctx_budget = max_length - NUM_SPECIAL_TOKENS - len(q_ids) - len(ans_ids)
    if ctx_budget < 0:
        raise EncodingError(
            f"question and answer exceed max_length={max_length} even with the "
            "context block dropped entirely"
        )
    truncated = len(ctx_ids) > ctx_budget
    kept_ctx = ctx_ids[:ctx_budget]

    cls_id, sep_id = tokenizer.seq_start_id, tokenizer.separator_id
    token_ids = [cls_id, *kept_ctx, sep_id, *q_ids, sep_id, *ans_ids, sep_id]
    segments = (
        [Segment.Special]
        + [Segment.Context] * len(kept_ctx)
        + [Segment.Special]
        + [Segment.Question] * len(q_ids)
        + [Segment.Special]
        + [Segment.Answer] * len(ans_ids)
        + [Segment.Special]
    )
    answer_offsets: list[tuple[int, int] | None] = [None] * len(token_ids)
    labels = [IGNORE_LABEL] * len(token_ids)
    answer_start = 1 + len(kept_ctx) + 1 + len(q_ids) + 1
    for j, off in enumerate(ans_offsets):
        answer_offsets[answer_start + j] = tuple(off)
        labels[answer_start + j] = 0

    return EncodedSequence(
        token_ids=tuple(token_ids),
        segments=tuple(segments),
        answer_offsets=tuple(answer_offsets),
        labels=tuple(labels),
        truncated=truncated,
        example_id=example_id,
        question_text=question,
        context_text=context_text,
        answer_text=answer,
    )


def _span_bounds(span) -> tuple[int, int]:
    if hasattr(span, "start"):
        return span.start, span.end
    start, end = span
    return start, end


def project_labels(seq: EncodedSequence, gold_spans: Iterable) -> EncodedSequence:
    """Stamp gold character spans onto answer-token labels.

    An answer token is labeled 1 iff its character range intersects any gold
    span (any-overlap rule); all other answer tokens get 0. Spans may be
    GoldSpan objects or (start, end) pairs indexing ``seq.answer_text``.
    """
    bounds = [_span_bounds(s) for s in gold_spans]
    for start, end in bounds:
        if not (0 <= start < end <= len(seq.answer_text)):
            raise EncodingError(
                f"gold span ({start}, {end}) outside answer bounds "
                f"[0, {len(seq.answer_text)})"
            )
    labels = list(seq.labels)
    for i, off in enumerate(seq.answer_offsets):
        if off is None:
            continue
        tok_start, tok_end = off
        hit = any(tok_start < end and start < tok_end for start, end in bounds)
        labels[i] = 1 if hit else 0
    return replace(seq, labels=tuple(labels), has_gold_labels=True)


def token_range_to_char_span(seq: EncodedSequence, first: int, last: int) -> tuple[int, int]:
    """Map an inclusive token range back to answer character offsets."""
    if first > last:
        raise ValueError(f"invalid token range: first={first} > last={last}")
    for i in range(first, last + 1):
        if seq.segments[i] is not Segment.Answer:
            raise ValueError(
                f"token {i} is {seq.segments[i].value}, not an answer token"
            )
    return seq.answer_offsets[first][0], seq.answer_offsets[last][1]


def collect_label_runs(seq: EncodedSequence) -> list[tuple[int, int]]:
    """Maximal runs of label-1 answer tokens, as inclusive token index ranges."""
    runs: list[tuple[int, int]] = []
    run_start = None
    for i, (seg, lab) in enumerate(zip(seq.segments, seq.labels)):
        if seg is Segment.Answer and lab == 1:
            if run_start is None:
                run_start = i
        elif run_start is not None:
            runs.append((run_start, i - 1))
            run_start = None
    if run_start is not None:
        runs.append((run_start, len(seq.labels) - 1))
    return runs


def encode_example(example, tokenizer: Tokenizer, max_length: int = DEFAULT_MAX_LENGTH) -> EncodedSequence:
    """Assemble an AnnotatedExample (without stamping its gold labels)."""
    return assemble(
        example.question,
        example.contexts,
        example.answer,
        tokenizer,
        max_length=max_length,
        example_id=example.id,
    )


def labeled_sequence(example, tokenizer: Tokenizer, max_length: int = DEFAULT_MAX_LENGTH) -> EncodedSequence:
    """Assemble an AnnotatedExample and project its gold spans onto labels."""
    return project_labels(encode_example(example, tokenizer, max_length), example.gold_spans)
