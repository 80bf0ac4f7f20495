"""Token scoring backends and probability-to-span aggregation.

A ScoringBackend maps encoded sequences to per-token hallucination
probabilities; everything after that (thresholding, run aggregation, offset
mapping back to characters) is pure and backend-independent. Spans are
maximal runs of answer tokens whose probability strictly exceeds the
threshold; non-answer tokens always break runs.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from groundcheck.encoding import (
    EncodedSequence,
    Segment,
    token_range_to_char_span,
)

DEFAULT_THRESHOLD = 0.5


class BackendError(RuntimeError):
    """A scoring backend failed; carries the backend id for diagnostics."""

    def __init__(self, message: str, backend_id: str = ""):
        super().__init__(f"[{backend_id}] {message}" if backend_id else message)
        self.backend_id = backend_id


class TransportError(BackendError):
    """The remote scorer could not be reached or answered non-success."""


class ScoreContractError(BackendError):
    """A backend returned scores violating the TokenScores contract."""


@dataclass(frozen=True)
class TokenScores:
    """Per-token probability of the hallucinated class, parallel to a sequence."""

    probs: tuple[float, ...]
    backend_id: str


@dataclass(frozen=True)
class BackendInfo:
    name: str
    max_length: int | None
    version: str
    single_flight: bool = False


@dataclass(frozen=True)
class HallucinationSpan:
    """Half-open character interval into the answer, with its covered text."""

    start: int
    end: int
    text: str
    confidence: float

    def to_dict(self) -> dict:
        return {
            "start": self.start,
            "end": self.end,
            "text": self.text,
            "confidence": self.confidence,
        }


@dataclass(frozen=True)
class DetectionResult:
    spans: tuple[HallucinationSpan, ...]
    hallucinated: bool
    example_confidence: float
    truncated: bool

    def to_dict(self) -> dict:
        return {
            "spans": [s.to_dict() for s in self.spans],
            "hallucinated": self.hallucinated,
            "example_confidence": self.example_confidence,
            "truncated": self.truncated,
        }


@runtime_checkable
class ScoringBackend(Protocol):
    def score_batch(self, seqs: Sequence[EncodedSequence]) -> list[TokenScores]: ...

    def metadata(self) -> BackendInfo: ...


def validate_scores(scores: TokenScores, seq: EncodedSequence) -> TokenScores:
    if len(scores.probs) != len(seq.token_ids):
        raise ScoreContractError(
            f"got {len(scores.probs)} probabilities for {len(seq.token_ids)} tokens",
            scores.backend_id,
        )
    for p in scores.probs:
        if not 0.0 <= p <= 1.0:
            raise ScoreContractError(f"probability {p} outside [0, 1]", scores.backend_id)
    return scores


def aggregate_token_ranges(
    scores: TokenScores, seq: EncodedSequence, threshold: float
) -> list[tuple[int, int]]:
    """Maximal runs of answer tokens with prob strictly above the threshold.

    Returns inclusive (first, last) token-index pairs, sorted and disjoint.
    Non-answer tokens break runs and are never included.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")
    if len(scores.probs) != len(seq.token_ids):
        raise ValueError(
            f"scores have {len(scores.probs)} entries for {len(seq.token_ids)} tokens"
        )
    ranges: list[tuple[int, int]] = []
    run_start = None
    for i, (seg, prob) in enumerate(zip(seq.segments, scores.probs)):
        if seg is Segment.Answer and prob > threshold:
            if run_start is None:
                run_start = i
        elif run_start is not None:
            ranges.append((run_start, i - 1))
            run_start = None
    if run_start is not None:
        ranges.append((run_start, len(seq.segments) - 1))
    return ranges


def result_from_scores(
    seq: EncodedSequence, scores: TokenScores, threshold: float = DEFAULT_THRESHOLD
) -> DetectionResult:
    """Turn validated token scores into character spans and example verdicts."""
    spans = []
    for first, last in aggregate_token_ranges(scores, seq, threshold):
        start, end = token_range_to_char_span(seq, first, last)
        if start == end:  # zero-width token artifacts cannot be highlighted
            continue
        confidence = statistics.fmean(scores.probs[first : last + 1])
        spans.append(
            HallucinationSpan(start, end, seq.answer_text[start:end], confidence)
        )
    answer_probs = [
        p for p, seg in zip(scores.probs, seq.segments) if seg is Segment.Answer
    ]
    return DetectionResult(
        spans=tuple(spans),
        hallucinated=bool(spans),
        example_confidence=max(answer_probs, default=0.0),
        truncated=seq.truncated,
    )


def detect(
    seq: EncodedSequence,
    backend: ScoringBackend,
    threshold: float = DEFAULT_THRESHOLD,
) -> DetectionResult:
    """Score one sequence and aggregate into hallucinated character spans."""
    return detect_batch([seq], backend, threshold)[0]


def detect_batch(
    seqs: Sequence[EncodedSequence],
    backend: ScoringBackend,
    threshold: float = DEFAULT_THRESHOLD,
) -> list[DetectionResult]:
    if not seqs:
        return []
    all_scores = backend.score_batch(seqs)
    if len(all_scores) != len(seqs):
        raise ScoreContractError(
            f"backend returned {len(all_scores)} score vectors for {len(seqs)} sequences",
            backend.metadata().name,
        )
    return [
        result_from_scores(seq, validate_scores(scores, seq), threshold)
        for seq, scores in zip(seqs, all_scores)
    ]


class MockBackend:
    """Deterministic rule backends for tests and model-free demos.

    rule="gold"      probability 1.0 on tokens labeled 1, else 0.0 (requires
                     sequences that went through label projection);
    rule="constant"  the given constant everywhere;
    rule="lexical"   1.0 on answer tokens whose surface text does not occur
                     anywhere in the joined context block, else 0.0 — a weak
                     copy-detection heuristic, useful end to end without any
                     model asset.
    """

    RULES = ("gold", "constant", "lexical")

    def __init__(self, rule: str = "gold", constant: float = 0.0):
        if rule not in self.RULES:
            raise ValueError(f"unknown mock rule {rule!r}; expected one of {self.RULES}")
        if rule == "constant" and not 0.0 <= constant <= 1.0:
            raise ValueError(f"constant must be in [0, 1], got {constant}")
        self.rule = rule
        self.constant = constant

    def metadata(self) -> BackendInfo:
        name = f"mock:{self.rule}"
        if self.rule == "constant":
            name += f":{self.constant}"
        return BackendInfo(name=name, max_length=None, version="1")

    def _score_one(self, seq: EncodedSequence) -> TokenScores:
        if self.rule == "gold":
            if not seq.has_gold_labels:
                raise BackendError(
                    f"sequence {seq.example_id!r} has no projected gold labels",
                    self.metadata().name,
                )
            probs = tuple(1.0 if lab == 1 else 0.0 for lab in seq.labels)
        elif self.rule == "constant":
            probs = tuple(float(self.constant) for _ in seq.token_ids)
        else:
            probs = tuple(
                1.0
                if seg is Segment.Answer
                and seq.answer_text[off[0] : off[1]] not in seq.context_text
                else 0.0
                for seg, off in zip(seq.segments, seq.answer_offsets)
            )
        return TokenScores(probs=probs, backend_id=self.metadata().name)

    def score_batch(self, seqs: Sequence[EncodedSequence]) -> list[TokenScores]:
        return [self._score_one(s) for s in seqs]


class GraphBackend:
    """Runs an exported token-classification graph (single-file ONNX model).

    The graph must produce two-class logits per token; class-1 probability is
    recovered with a softmax over the final axis. Sequences are padded to the
    batch maximum with zero ids and a matching attention mask.
    """

    def __init__(self, model_path: str | Path, device: str = "cpu", max_length: int = 4096):
        from groundcheck import onnx_graph

        if device != "cpu":
            raise BackendError(f"device unavailable: {device!r} (only 'cpu' is supported)")
        path = Path(model_path)
        if not path.is_file():
            raise FileNotFoundError(f"model file not found: {path}")
        self._model = onnx_graph.load_model(path)
        self._name = f"graph:{path.name}"
        self._max_length = max_length
        self._wants_mask = "attention_mask" in self._model.input_names

    def metadata(self) -> BackendInfo:
        return BackendInfo(
            name=self._name,
            max_length=self._max_length,
            version=f"opset{self._model.opset}",
        )

    def score_batch(self, seqs: Sequence[EncodedSequence]) -> list[TokenScores]:
        if not seqs:
            return []
        lengths = [len(s) for s in seqs]
        for s in seqs:
            if len(s) > self._max_length:
                raise BackendError(
                    f"sequence {s.example_id!r} has {len(s)} tokens, backend limit "
                    f"is {self._max_length}",
                    self._name,
                )
        width = max(lengths)
        ids = np.zeros((len(seqs), width), dtype=np.int64)
        mask = np.zeros((len(seqs), width), dtype=np.int64)
        for row, s in enumerate(seqs):
            ids[row, : len(s)] = s.token_ids
            mask[row, : len(s)] = 1
        feeds = {"token_ids": ids}
        if self._wants_mask:
            feeds["attention_mask"] = mask
        try:
            logits = self._model.run(feeds)[0]
        except Exception as exc:
            raise BackendError(f"graph evaluation failed: {exc}", self._name) from exc
        if logits.ndim != 3 or logits.shape[-1] != 2:
            raise ScoreContractError(
                f"expected [batch, seq, 2] logits, got shape {logits.shape}", self._name
            )
        shifted = logits - logits.max(axis=-1, keepdims=True)
        expd = np.exp(shifted)
        probs = expd[..., 1] / expd.sum(axis=-1)
        return [
            TokenScores(
                probs=tuple(float(p) for p in probs[row, :length]),
                backend_id=self._name,
            )
            for row, length in enumerate(lengths)
        ]


class RemoteBackend:
    """Delegates scoring to an HTTP endpoint.

    Wire format: POST {"token_ids": [[int]]} -> {"probs": [[float]]}.
    Transport failures (timeouts, refused connections, non-success statuses)
    raise TransportError; malformed or misaligned responses raise
    ScoreContractError.
    """

    def __init__(self, endpoint_url: str, timeout: float = 30.0, max_length: int | None = None):
        self._url = endpoint_url
        self._timeout = timeout
        self._max_length = max_length
        self._name = f"remote:{endpoint_url}"

    def metadata(self) -> BackendInfo:
        return BackendInfo(name=self._name, max_length=self._max_length, version="1")

    def score_batch(self, seqs: Sequence[EncodedSequence]) -> list[TokenScores]:
        import httpx

        if not seqs:
            return []
        payload = {"token_ids": [list(s.token_ids) for s in seqs]}
        try:
            response = httpx.post(self._url, json=payload, timeout=self._timeout)
        except httpx.TimeoutException as exc:
            raise TransportError(f"scoring request timed out after {self._timeout}s", self._name) from exc
        except httpx.HTTPError as exc:
            raise TransportError(f"scoring request failed: {exc}", self._name) from exc
        if response.status_code != 200:
            raise TransportError(
                f"scoring endpoint returned HTTP {response.status_code}", self._name
            )
        try:
            body = response.json()
            probs = body["probs"]
            assert isinstance(probs, list)
        except Exception as exc:
            raise ScoreContractError(f"malformed response body: {exc}", self._name) from exc
        if len(probs) != len(seqs):
            raise ScoreContractError(
                f"endpoint returned {len(probs)} score vectors for {len(seqs)} sequences",
                self._name,
            )
        return [
            validate_scores(
                TokenScores(probs=tuple(float(p) for p in row), backend_id=self._name),
                seq,
            )
            for row, seq in zip(probs, seqs)
        ]


def backend_from_spec(spec: str, max_length: int = 4096) -> ScoringBackend:
    """Build a backend from a spec string.

    Accepted forms: "mock:gold", "mock:lexical", "mock:constant:<value>",
    "graph:<model path>", "remote:<url>".
    """
    kind, _, rest = spec.partition(":")
    if kind == "mock":
        rule, _, value = rest.partition(":")
        if rule == "constant":
            return MockBackend("constant", constant=float(value) if value else 0.0)
        return MockBackend(rule or "gold")
    if kind == "graph":
        if not rest:
            raise ValueError("graph backend needs a model path: graph:<path>")
        return GraphBackend(rest, max_length=max_length)
    if kind == "remote":
        if not rest:
            raise ValueError("remote backend needs a URL: remote:<url>")
        return RemoteBackend(rest, max_length=max_length)
    raise ValueError(f"unknown backend spec {spec!r}")
