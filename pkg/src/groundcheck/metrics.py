"""Example-level and span-level precision/recall/F1, per task and overall.

Example level treats "contains any hallucination" as the positive class.
Span level counts character overlap between predicted and gold spans,
micro-averaged over the corpus by default (a macro mode is available for
sensitivity analysis). Reports serialize to JSON, an aligned text table,
and CSV.
"""

from __future__ import annotations

import csv
import io
import json
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from groundcheck.corpus import AnnotatedExample, TaskType, corpus_fingerprint
from groundcheck.detection import ScoringBackend, detect_batch
from groundcheck.encoding import Tokenizer, labeled_sequence

OVERALL = "Overall"
REPORT_KEYS = (TaskType.QA.value, TaskType.Data2Txt.value, TaskType.Summarization.value, OVERALL)


def f1(p: float, r: float) -> float:
    """Harmonic mean of precision and recall; 0 when both are 0."""
    if p + r == 0:
        return 0.0
    return 2 * p * r / (p + r)


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float
    tp: float = 0.0
    fp: float = 0.0
    fn: float = 0.0

    def to_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
        }

    @classmethod
    def from_counts(cls, tp: float, fp: float, fn: float) -> "PRF":
        p = tp / (tp + fp) if tp + fp > 0 else 0.0
        r = tp / (tp + fn) if tp + fn > 0 else 0.0
        return cls(precision=p, recall=r, f1=f1(p, r), tp=tp, fp=fp, fn=fn)


def example_level_prf(
    preds: Sequence[bool], golds: Sequence[bool], tasks: Sequence[TaskType]
) -> dict[str, PRF]:
    """Binary detection PRF per task type plus Overall (positive = hallucinated)."""
    if not (len(preds) == len(golds) == len(tasks)):
        raise ValueError(
            f"length mismatch: {len(preds)} preds, {len(golds)} golds, {len(tasks)} tasks"
        )
    counts = {key: [0, 0, 0] for key in REPORT_KEYS}  # tp, fp, fn
    for pred, gold, task in zip(preds, golds, tasks):
        for key in (TaskType(task).value, OVERALL):
            if pred and gold:
                counts[key][0] += 1
            elif pred and not gold:
                counts[key][1] += 1
            elif gold and not pred:
                counts[key][2] += 1
    return {key: PRF.from_counts(*c) for key, c in counts.items()}


def _as_intervals(spans, where: str) -> list[tuple[int, int]]:
    out = []
    for span in spans:
        if hasattr(span, "start"):
            out.append((span.start, span.end))
        else:
            s, e = span
            out.append((int(s), int(e)))
    out.sort()
    for (s1, e1), (s2, _) in zip(out, out[1:]):
        if s2 < e1:
            raise ValueError(f"{where}: overlapping spans ({s1},{e1}) and ({s2},..); normalize first")
    for s, e in out:
        if s >= e:
            raise ValueError(f"{where}: degenerate span ({s},{e})")
    return out


def _char_overlap(a: list[tuple[int, int]], b: list[tuple[int, int]]) -> int:
    return sum(
        max(0, min(e1, e2) - max(s1, s2)) for s1, e1 in a for s2, e2 in b
    )


def span_level_prf(
    pred_spans: Sequence[Iterable],
    gold_spans: Sequence[Iterable],
    tasks: Sequence[TaskType],
    average: str = "micro",
) -> dict[str, PRF]:
    """Character-overlap PRF per task plus Overall.

    micro: pool overlap/predicted/gold character counts over the corpus, then
    divide. macro: average per-example P, R, and F1 (examples with neither
    predicted nor gold characters are skipped).
    """
    if not (len(pred_spans) == len(gold_spans) == len(tasks)):
        raise ValueError("pred_spans, gold_spans, tasks must be parallel")
    if average not in ("micro", "macro"):
        raise ValueError(f"average must be 'micro' or 'macro', got {average!r}")

    pooled = {key: [0, 0, 0] for key in REPORT_KEYS}  # overlap, pred_chars, gold_chars
    per_example: dict[str, list[tuple[float, float, float]]] = {key: [] for key in REPORT_KEYS}
    for i, (pred, gold, task) in enumerate(zip(pred_spans, gold_spans, tasks)):
        p_iv = _as_intervals(pred, f"example {i} predictions")
        g_iv = _as_intervals(gold, f"example {i} gold")
        overlap = _char_overlap(p_iv, g_iv)
        p_chars = sum(e - s for s, e in p_iv)
        g_chars = sum(e - s for s, e in g_iv)
        for key in (TaskType(task).value, OVERALL):
            pooled[key][0] += overlap
            pooled[key][1] += p_chars
            pooled[key][2] += g_chars
            if p_chars or g_chars:
                p = overlap / p_chars if p_chars else 0.0
                r = overlap / g_chars if g_chars else 0.0
                per_example[key].append((p, r, f1(p, r)))

    result = {}
    for key in REPORT_KEYS:
        overlap, p_chars, g_chars = pooled[key]
        tp, fp, fn = overlap, p_chars - overlap, g_chars - overlap
        if average == "micro":
            result[key] = PRF.from_counts(tp, fp, fn)
        else:
            rows = per_example[key]
            if rows:
                result[key] = PRF(
                    precision=statistics.fmean(r[0] for r in rows),
                    recall=statistics.fmean(r[1] for r in rows),
                    f1=statistics.fmean(r[2] for r in rows),
                    tp=tp, fp=fp, fn=fn,
                )
            else:
                result[key] = PRF(0.0, 0.0, 0.0, tp, fp, fn)
    return result


@dataclass(frozen=True)
class EvalReport:
    example_level: dict[str, PRF]
    span_level: dict[str, PRF]
    threshold: float
    backend: str
    corpus_hash: str
    span_average: str = "micro"
    example_count: int = 0

    def to_dict(self) -> dict:
        return {
            "example_level": {k: v.to_dict() for k, v in self.example_level.items()},
            "span_level": {k: v.to_dict() for k, v in self.span_level.items()},
            "config": {
                "threshold": self.threshold,
                "backend": self.backend,
                "corpus_hash": self.corpus_hash,
                "span_average": self.span_average,
                "example_count": self.example_count,
            },
        }

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        raw = json.loads(text)
        cfg = raw["config"]
        return cls(
            example_level={k: PRF(**v) for k, v in raw["example_level"].items()},
            span_level={k: PRF(**v) for k, v in raw["span_level"].items()},
            threshold=cfg["threshold"],
            backend=cfg["backend"],
            corpus_hash=cfg["corpus_hash"],
            span_average=cfg["span_average"],
            example_count=cfg["example_count"],
        )

    def render_table(self) -> str:
        header_groups = "".join(f"{key:>24}" for key in REPORT_KEYS)
        sub = "".join(f"{'P':>8}{'R':>8}{'F1':>8}" for _ in REPORT_KEYS)
        lines = [
            f"backend={self.backend}  threshold={self.threshold}  "
            f"span_average={self.span_average}  corpus={self.corpus_hash}  "
            f"n={self.example_count}",
            f"{'level':<14}" + header_groups,
            f"{'':<14}" + sub,
        ]
        for level_name, level in (("example", self.example_level), ("span", self.span_level)):
            row = f"{level_name:<14}"
            for key in REPORT_KEYS:
                prf = level[key]
                row += f"{100 * prf.precision:>8.2f}{100 * prf.recall:>8.2f}{100 * prf.f1:>8.2f}"
            lines.append(row)
        return "\n".join(lines) + "\n"

    def render_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["level", "task", "precision", "recall", "f1", "tp", "fp", "fn"])
        for level_name, level in (("example", self.example_level), ("span", self.span_level)):
            for key in REPORT_KEYS:
                prf = level[key]
                writer.writerow(
                    [level_name, key, prf.precision, prf.recall, prf.f1, prf.tp, prf.fp, prf.fn]
                )
        return buf.getvalue()


def evaluate(
    examples: Sequence[AnnotatedExample],
    backend: ScoringBackend,
    tokenizer: Tokenizer,
    threshold: float = 0.5,
    max_length: int = 4096,
    jobs: int = 1,
    batch_size: int = 8,
    span_average: str = "micro",
    latency_sink: list[float] | None = None,
) -> EvalReport:
    """Run encode → score → aggregate over a corpus and compute both metric
    families.

    The report is deterministic given (corpus, backend, threshold) and
    independent of ``jobs``/``batch_size``; those only control fan-out. When
    ``latency_sink`` is provided, one per-example wall-clock duration (seconds,
    chunk time divided by chunk size) is appended per example.
    """
    if not examples:
        raise ValueError("empty corpus")
    chunks = [examples[i : i + batch_size] for i in range(0, len(examples), batch_size)]

    def run_chunk(chunk):
        started = time.perf_counter()
        try:
            seqs = [labeled_sequence(ex, tokenizer, max_length) for ex in chunk]
            results = detect_batch(seqs, backend, threshold)
        except Exception as exc:
            ids = ", ".join(ex.id for ex in chunk)
            raise RuntimeError(f"evaluation failed on example(s) {ids}: {exc}") from exc
        elapsed = time.perf_counter() - started
        return results, elapsed / len(chunk)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(run_chunk, chunks))
    else:
        outcomes = [run_chunk(chunk) for chunk in chunks]

    preds, golds, tasks = [], [], []
    pred_spans, gold_spans = [], []
    for chunk, (results, per_example_seconds) in zip(chunks, outcomes):
        for ex, res in zip(chunk, results):
            preds.append(res.hallucinated)
            golds.append(bool(ex.gold_spans))
            tasks.append(ex.task_type)
            pred_spans.append([(s.start, s.end) for s in res.spans])
            gold_spans.append([(g.start, g.end) for g in ex.gold_spans])
            if latency_sink is not None:
                latency_sink.append(per_example_seconds)

    return EvalReport(
        example_level=example_level_prf(preds, golds, tasks),
        span_level=span_level_prf(pred_spans, gold_spans, tasks, average=span_average),
        threshold=threshold,
        backend=backend.metadata().name,
        corpus_hash=corpus_fingerprint(examples),
        span_average=span_average,
        example_count=len(examples),
    )
