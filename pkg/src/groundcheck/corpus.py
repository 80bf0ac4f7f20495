"""Loading, normalization, and statistics for span-annotated RAG answer corpora.

The raw interchange format (a *source* file joined with a *responses* file,
both line-delimited JSON) is documented in FORMATS.md at the repo root and
pinned by golden tests. Everything downstream consumes the normalized
one-example-per-line format produced by :func:`load_corpus` /
:func:`save_corpus`.
"""

from __future__ import annotations

import hashlib
import json
import statistics
import sys
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator


class TaskType(str, Enum):
    QA = "QA"
    Data2Txt = "Data2Txt"
    Summarization = "Summarization"


class Split(str, Enum):
    train = "train"
    dev = "dev"
    test = "test"


class HallucinationType(str, Enum):
    """Annotation taxonomy. Carried as metadata only; never a prediction target."""

    EvidentConflict = "EvidentConflict"
    SubtleConflict = "SubtleConflict"
    EvidentBaseless = "EvidentBaseless"
    SubtleBaseless = "SubtleBaseless"


class CorpusValidationError(ValueError):
    """A corpus record failed structural or span validation."""


# Tolerant aliases for fields coming from raw files. Keys are lowercased with
# non-alphanumeric characters stripped.
_TASK_ALIASES = {
    "qa": TaskType.QA,
    "questionanswering": TaskType.QA,
    "data2txt": TaskType.Data2Txt,
    "data2text": TaskType.Data2Txt,
    "datatotext": TaskType.Data2Txt,
    "summary": TaskType.Summarization,
    "summarization": TaskType.Summarization,
}

_TYPE_ALIASES = {
    "evidentconflict": HallucinationType.EvidentConflict,
    "subtleconflict": HallucinationType.SubtleConflict,
    "evidentbaseless": HallucinationType.EvidentBaseless,
    "evidentbaselessinfo": HallucinationType.EvidentBaseless,
    "evidentintroductionofbaselessinformation": HallucinationType.EvidentBaseless,
    "subtlebaseless": HallucinationType.SubtleBaseless,
    "subtlebaselessinfo": HallucinationType.SubtleBaseless,
    "subtleintroductionofbaselessinformation": HallucinationType.SubtleBaseless,
}

_SPLIT_ALIASES = {
    "train": Split.train,
    "training": Split.train,
    "dev": Split.dev,
    "validation": Split.dev,
    "val": Split.dev,
    "test": Split.test,
}


def _fold(raw: str) -> str:
    return "".join(c for c in raw.lower() if c.isalnum())


@dataclass(frozen=True)
class GoldSpan:
    """Half-open character interval [start, end) into an answer string."""

    start: int
    end: int
    hallucination_type: HallucinationType
    rationale: str = ""

    def to_dict(self) -> dict:
        return {
            "start": self.start,
            "end": self.end,
            "hallucination_type": self.hallucination_type.value,
            "rationale": self.rationale,
        }


@dataclass(frozen=True)
class AnnotatedExample:
    """One (question, contexts, answer) triple with gold hallucination spans.

    ``question`` is empty for summarization and data-to-text examples; the
    reference material lives in ``contexts`` so every task shares one triple
    shape.
    """

    id: str
    task_type: TaskType
    question: str
    contexts: tuple[str, ...]
    answer: str
    generator: str
    gold_spans: tuple[GoldSpan, ...]
    split: Split

    def validate(self) -> None:
        if not self.contexts:
            raise CorpusValidationError(f"example {self.id!r}: contexts is empty")
        if not self.answer:
            raise CorpusValidationError(f"example {self.id!r}: answer is empty")
        prev_end = -1
        for span in self.gold_spans:
            if not (0 <= span.start < span.end <= len(self.answer)):
                raise CorpusValidationError(
                    f"example {self.id!r}: span ({span.start}, {span.end}) outside "
                    f"answer bounds [0, {len(self.answer)})"
                )
            if span.start < prev_end:
                raise CorpusValidationError(
                    f"example {self.id!r}: gold spans overlap or are unsorted"
                )
            prev_end = span.end

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "task_type": self.task_type.value,
            "question": self.question,
            "contexts": list(self.contexts),
            "answer": self.answer,
            "generator": self.generator,
            "split": self.split.value,
            "gold_spans": [s.to_dict() for s in self.gold_spans],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AnnotatedExample":
        spans = tuple(
            GoldSpan(
                start=s["start"],
                end=s["end"],
                hallucination_type=HallucinationType(s["hallucination_type"]),
                rationale=s.get("rationale", ""),
            )
            for s in d["gold_spans"]
        )
        ex = cls(
            id=d["id"],
            task_type=TaskType(d["task_type"]),
            question=d["question"],
            contexts=tuple(d["contexts"]),
            answer=d["answer"],
            generator=d["generator"],
            gold_spans=spans,
            split=Split(d["split"]),
        )
        ex.validate()
        return ex


@dataclass(frozen=True)
class CorpusStats:
    count: int
    token_mean: float
    token_median: float
    token_min: int
    token_max: int
    per_task_counts: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "token_mean": self.token_mean,
            "token_median": self.token_median,
            "token_min": self.token_min,
            "token_max": self.token_max,
            "per_task_counts": dict(self.per_task_counts),
        }


def normalize_spans(spans: Iterable[GoldSpan]) -> tuple[GoldSpan, ...]:
    """Sort spans by start and merge strictly overlapping ones into their union.

    Touching spans (one ends where the next starts) stay separate; the set of
    covered characters is unchanged either way. A merged span keeps the
    metadata of its earliest-starting member.
    """
    ordered = sorted(spans, key=lambda s: (s.start, s.end))
    merged: list[GoldSpan] = []
    for span in ordered:
        if merged and span.start < merged[-1].end:
            prev = merged[-1]
            merged[-1] = GoldSpan(
                start=prev.start,
                end=max(prev.end, span.end),
                hallucination_type=prev.hallucination_type,
                rationale=prev.rationale,
            )
        else:
            merged.append(span)
    return tuple(merged)


def derive_split(example_id: str) -> Split:
    """Deterministic 80/10/10 split from a hash of the example id."""
    digest = hashlib.sha256(example_id.encode("utf-8")).hexdigest()
    bucket = int(digest[-8:], 16) % 10
    if bucket < 8:
        return Split.train
    return Split.dev if bucket == 8 else Split.test


def _parse_jsonl(path: str | Path) -> Iterator[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusValidationError(
                    f"{path}:{line_no}: invalid JSON ({exc.msg})"
                ) from exc
            if not isinstance(record, dict):
                raise CorpusValidationError(
                    f"{path}:{line_no}: expected a JSON object"
                )
            yield line_no, record


def _require(record: dict, key: str, where: str):
    if key not in record:
        raise CorpusValidationError(f"{where}: missing field {key!r}")
    return record[key]


def _contexts_from_source(record: dict, task: TaskType, where: str) -> tuple[str, ...]:
    info = _require(record, "source_info", where)
    if isinstance(info, str):
        passages: list[str] = [info]
    elif isinstance(info, dict) and "passages" in info:
        raw = info["passages"]
        passages = [raw] if isinstance(raw, str) else list(raw)
    elif isinstance(info, dict) and task is TaskType.Data2Txt:
        # Structured record (e.g. a business profile): serialize it
        # deterministically into a single reference passage.
        passages = [json.dumps(info, indent=2, sort_keys=True, ensure_ascii=False)]
    else:
        raise CorpusValidationError(
            f"{where}: field 'source_info' has no usable passages"
        )
    passages = [p for p in passages if isinstance(p, str)]
    if not passages or not any(passages):
        raise CorpusValidationError(f"{where}: field 'source_info' yields no passages")
    return tuple(passages)


def _question_from_source(record: dict, task: TaskType, where: str) -> str:
    if task is not TaskType.QA:
        return ""
    info = record.get("source_info")
    if isinstance(info, dict) and isinstance(info.get("question"), str):
        return info["question"]
    raise CorpusValidationError(f"{where}: QA record lacks 'source_info.question'")


def _spans_from_labels(labels, answer: str, example_id: str, where: str) -> tuple[GoldSpan, ...]:
    spans = []
    for i, lab in enumerate(labels):
        if not isinstance(lab, dict):
            raise CorpusValidationError(f"{where}: labels[{i}] is not an object")
        start = _require(lab, "start", f"{where}: labels[{i}]")
        end = _require(lab, "end", f"{where}: labels[{i}]")
        if not isinstance(start, int) or not isinstance(end, int) or start >= end:
            raise CorpusValidationError(
                f"{where}: labels[{i}] has invalid interval ({start!r}, {end!r})"
            )
        if not (0 <= start < end <= len(answer)):
            raise CorpusValidationError(
                f"example {example_id!r}: span ({start}, {end}) outside answer "
                f"bounds [0, {len(answer)}) ({where}: labels[{i}])"
            )
        raw_type = _require(lab, "label_type", f"{where}: labels[{i}]")
        h_type = _TYPE_ALIASES.get(_fold(str(raw_type)))
        if h_type is None:
            raise CorpusValidationError(
                f"{where}: labels[{i}] has unknown label_type {raw_type!r}"
            )
        text = lab.get("text")
        if text is not None and answer[start:end] != text:
            raise CorpusValidationError(
                f"example {example_id!r}: labels[{i}] text mismatch: "
                f"answer[{start}:{end}] == {answer[start:end]!r} != {text!r} ({where})"
            )
        rationale = lab.get("meta") or lab.get("reason") or ""
        spans.append(GoldSpan(start, end, h_type, rationale))
    return normalize_spans(spans)


def load_corpus(source_path: str | Path, responses_path: str | Path) -> list[AnnotatedExample]:
    """Join a raw source file with a raw responses file into AnnotatedExamples.

    One example per (source, response) pair. Gold spans are validated against
    the response text, sorted, and overlap-merged. Raises
    CorpusValidationError naming the file, line, and field on any malformed
    record; a missing join key names the offending source_id.
    """
    sources: dict[str, tuple[dict, TaskType, int]] = {}
    for line_no, record in _parse_jsonl(source_path):
        where = f"{source_path}:{line_no}"
        source_id = str(_require(record, "source_id", where))
        raw_task = str(_require(record, "task_type", where))
        task = _TASK_ALIASES.get(_fold(raw_task))
        if task is None:
            raise CorpusValidationError(f"{where}: unknown task_type {raw_task!r}")
        if source_id in sources:
            raise CorpusValidationError(f"{where}: duplicate source_id {source_id!r}")
        sources[source_id] = (record, task, line_no)

    examples: list[AnnotatedExample] = []
    for line_no, record in _parse_jsonl(responses_path):
        where = f"{responses_path}:{line_no}"
        source_id = str(_require(record, "source_id", where))
        if source_id not in sources:
            raise CorpusValidationError(
                f"{where}: source_id {source_id!r} not present in {source_path}"
            )
        src_record, task, _ = sources[source_id]
        model = str(_require(record, "model", where))
        answer = _require(record, "response", where)
        if not isinstance(answer, str) or not answer:
            raise CorpusValidationError(f"{where}: field 'response' must be a non-empty string")
        example_id = str(record.get("id") or f"{source_id}::{model}")
        spans = _spans_from_labels(record.get("labels", []), answer, example_id, where)

        raw_split = record.get("split") or src_record.get("split")
        if raw_split is not None:
            split = _SPLIT_ALIASES.get(_fold(str(raw_split)))
            if split is None:
                raise CorpusValidationError(f"{where}: unknown split {raw_split!r}")
        else:
            split = derive_split(example_id)

        example = AnnotatedExample(
            id=example_id,
            task_type=task,
            question=_question_from_source(src_record, task, where),
            contexts=_contexts_from_source(src_record, task, where),
            answer=answer,
            generator=model,
            gold_spans=spans,
            split=split,
        )
        example.validate()
        examples.append(example)
    return examples


def save_corpus(examples: Iterable[AnnotatedExample], out) -> None:
    """Write examples in the normalized line-delimited format.

    ``out`` is a path or an open text handle (e.g. sys.stdout).
    """
    if hasattr(out, "write"):
        for ex in examples:
            out.write(json.dumps(ex.to_dict(), ensure_ascii=False) + "\n")
        return
    with open(out, "w", encoding="utf-8") as fh:
        save_corpus(examples, fh)


def load_normalized(path: str | Path) -> list[AnnotatedExample]:
    """Read a normalized corpus file back into AnnotatedExamples."""
    examples = []
    for line_no, record in _parse_jsonl(path):
        try:
            examples.append(AnnotatedExample.from_dict(record))
        except (KeyError, ValueError) as exc:
            if isinstance(exc, CorpusValidationError):
                raise
            raise CorpusValidationError(f"{path}:{line_no}: {exc}") from exc
    return examples


def filter_split(examples: Iterable[AnnotatedExample], split: Split | str) -> list[AnnotatedExample]:
    """Stable-order subset of examples carrying the given split tag."""
    split = Split(split)
    return [ex for ex in examples if ex.split is split]


def corpus_stats(examples: list[AnnotatedExample], tokenizer, max_length: int | None = None) -> CorpusStats:
    """Order statistics over assembled-sequence token lengths.

    Counting convention: the length of the full untruncated classifier input
    (context block + question + answer plus the 4 structural special tokens)
    as assembled by the encoding module. Pass ``max_length`` to measure
    post-truncation lengths instead.
    """
    from groundcheck import encoding  # local import; encoding has no corpus dependency

    if not examples:
        raise ValueError("empty corpus")
    lengths = []
    per_task: dict[str, int] = {t.value: 0 for t in TaskType}
    for ex in examples:
        lengths.append(
            encoding.assembled_length(
                ex.question, ex.contexts, ex.answer, tokenizer, max_length=max_length
            )
        )
        per_task[ex.task_type.value] += 1
    return CorpusStats(
        count=len(examples),
        token_mean=statistics.fmean(lengths),
        token_median=float(statistics.median(lengths)),
        token_min=min(lengths),
        token_max=max(lengths),
        per_task_counts=per_task,
    )


def corpus_fingerprint(examples: Iterable[AnnotatedExample]) -> str:
    """Stable hash of a corpus, echoed in evaluation reports."""
    digest = hashlib.sha256()
    for ex in examples:
        digest.update(json.dumps(ex.to_dict(), sort_keys=True).encode("utf-8"))
        digest.update(b"\n")
    return digest.hexdigest()[:16]
