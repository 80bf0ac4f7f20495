"""Metric correctness against brute-force oracles, plus report serialization."""

from __future__ import annotations

import random

import pytest

from groundcheck.corpus import TaskType
from groundcheck.detection import MockBackend
from groundcheck.metrics import (
    OVERALL,
    EvalReport,
    PRF,
    evaluate,
    example_level_prf,
    f1,
    span_level_prf,
)

QA, D2T, SUM = TaskType.QA, TaskType.Data2Txt, TaskType.Summarization


def charset_prf(pred_spans, gold_spans):
    """Independent per-character set implementation of the span metric."""
    overlap = pred_chars = gold_chars = 0
    for pred, gold in zip(pred_spans, gold_spans):
        p = {c for s, e in pred for c in range(s, e)}
        g = {c for s, e in gold for c in range(s, e)}
        overlap += len(p & g)
        pred_chars += len(p)
        gold_chars += len(g)
    precision = overlap / pred_chars if pred_chars else 0.0
    recall = overlap / gold_chars if gold_chars else 0.0
    return precision, recall, f1(precision, recall)


def random_intervals(rng, max_spans=4):
    spans = []
    cursor = 0
    for _ in range(rng.randint(0, max_spans)):
        start = cursor + rng.randint(0, 10)
        end = start + rng.randint(1, 15)
        spans.append((start, end))
        cursor = end + rng.randint(1, 5)
    return spans


class TestF1:
    def test_perfect(self):
        assert f1(1.0, 1.0) == 1.0

    def test_zero_convention(self):
        assert f1(0.0, 0.0) == 0.0

    def test_published_example_level_overall(self):
        assert f1(0.8044, 0.7805) == pytest.approx(0.7922, abs=1e-4)

    def test_published_span_level_overall(self):
        assert f1(0.6492, 0.5396) == pytest.approx(0.5893, abs=1e-4)

    def test_bounds_between_min_and_max(self):
        rng = random.Random(3)
        for _ in range(500):
            p, r = rng.random(), rng.random()
            if p + r == 0:
                continue
            assert min(p, r) - 1e-12 <= f1(p, r) <= max(p, r) + 1e-12


class TestExampleLevel:
    def test_hand_confusion_matrix(self):
        golds = [True, True, False, False]
        preds = [True, False, True, False]
        out = example_level_prf(preds, golds, [QA] * 4)
        assert out["QA"].precision == 0.5
        assert out["QA"].recall == 0.5
        assert out["QA"].f1 == 0.5
        assert (out["QA"].tp, out["QA"].fp, out["QA"].fn) == (1, 1, 1)

    def test_perfect_predictions(self):
        golds = [True, False, True]
        out = example_level_prf(golds, golds, [QA, D2T, SUM])
        assert out[OVERALL] == PRF(1.0, 1.0, 1.0, tp=2, fp=0, fn=0)

    def test_no_predicted_positives_convention(self):
        out = example_level_prf([False, False], [True, True], [QA, QA])
        assert out["QA"].precision == 0.0
        assert out["QA"].recall == 0.0
        assert out["QA"].f1 == 0.0

    def test_per_task_buckets_and_overall_sum(self):
        preds = [True, True, False, True]
        golds = [True, False, True, True]
        tasks = [QA, D2T, SUM, QA]
        out = example_level_prf(preds, golds, tasks)
        for counts in ("tp", "fp", "fn"):
            total = sum(getattr(out[t.value], counts) for t in (QA, D2T, SUM))
            assert getattr(out[OVERALL], counts) == total

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError, match="length mismatch"):
            example_level_prf([True], [True, False], [QA, QA])


class TestSpanLevel:
    def test_half_overlap_single_example(self):
        out = span_level_prf([[(15, 25)]], [[(10, 20)]], [QA])
        assert out["QA"].precision == 0.5
        assert out["QA"].recall == 0.5
        assert out["QA"].f1 == 0.5

    def test_exact_match(self):
        spans = [[(3, 9), (12, 20)]]
        out = span_level_prf(spans, spans, [SUM])
        assert out[OVERALL] == PRF(1.0, 1.0, 1.0, tp=14, fp=0, fn=0)

    def test_micro_pools_characters_across_examples(self):
        # gold: 10 + 10 chars; pred: 5 chars fully inside gold, then nothing
        out = span_level_prf(
            [[(0, 5)], []],
            [[(0, 10)], [(0, 10)]],
            [QA, QA],
        )
        assert out["QA"].precision == 1.0
        assert out["QA"].recall == 0.25

    def test_matches_charset_oracle_exactly(self):
        rng = random.Random(11)
        for _ in range(300):
            n = rng.randint(1, 6)
            preds = [random_intervals(rng) for _ in range(n)]
            golds = [random_intervals(rng) for _ in range(n)]
            tasks = [rng.choice([QA, D2T, SUM]) for _ in range(n)]
            got = span_level_prf(preds, golds, tasks)[OVERALL]
            want_p, want_r, want_f1 = charset_prf(preds, golds)
            assert got.precision == want_p
            assert got.recall == want_r
            assert got.f1 == want_f1

    def test_swapping_pred_and_gold_swaps_p_and_r(self):
        rng = random.Random(13)
        for _ in range(100):
            n = rng.randint(1, 5)
            preds = [random_intervals(rng) for _ in range(n)]
            golds = [random_intervals(rng) for _ in range(n)]
            tasks = [rng.choice([QA, D2T, SUM]) for _ in range(n)]
            ab = span_level_prf(preds, golds, tasks)[OVERALL]
            ba = span_level_prf(golds, preds, tasks)[OVERALL]
            assert ab.precision == ba.recall
            assert ab.recall == ba.precision
            assert ab.f1 == pytest.approx(ba.f1, abs=1e-12)

    def test_micro_decomposition_overall_equals_task_sums(self):
        rng = random.Random(17)
        n = 12
        preds = [random_intervals(rng) for _ in range(n)]
        golds = [random_intervals(rng) for _ in range(n)]
        tasks = [rng.choice([QA, D2T, SUM]) for _ in range(n)]
        out = span_level_prf(preds, golds, tasks)
        for counts in ("tp", "fp", "fn"):
            total = sum(getattr(out[t.value], counts) for t in (QA, D2T, SUM))
            assert getattr(out[OVERALL], counts) == total

    def test_empty_empty_example_changes_nothing(self):
        preds, golds, tasks = [[(0, 4)]], [[(2, 6)]], [QA]
        base = span_level_prf(preds, golds, tasks)
        extended = span_level_prf(preds + [[]], golds + [[]], tasks + [QA])
        assert base == extended
        base_macro = span_level_prf(preds, golds, tasks, average="macro")
        extended_macro = span_level_prf(preds + [[]], golds + [[]], tasks + [QA], average="macro")
        assert base_macro == extended_macro

    def test_overlapping_spans_within_example_rejected(self):
        with pytest.raises(ValueError, match="normalize"):
            span_level_prf([[(0, 5), (3, 8)]], [[]], [QA])

    def test_macro_averages_per_example(self):
        # example 1: P=1, R=0.5; example 2: P=0.5, R=1
        out = span_level_prf(
            [[(0, 5)], [(0, 10)]],
            [[(0, 10)], [(0, 5)]],
            [QA, QA],
            average="macro",
        )
        assert out["QA"].precision == pytest.approx(0.75)
        assert out["QA"].recall == pytest.approx(0.75)
        expected_f1 = (f1(1.0, 0.5) + f1(0.5, 1.0)) / 2
        assert out["QA"].f1 == pytest.approx(expected_f1)


class TestEvaluate:
    def test_gold_backend_is_perfect_on_fixture(self, corpus, tokenizer):
        report = evaluate(corpus, MockBackend("gold"), tokenizer)
        for key, prf in report.example_level.items():
            assert (prf.precision, prf.recall, prf.f1) == (1.0, 1.0, 1.0), key
        for key, prf in report.span_level.items():
            assert (prf.precision, prf.recall, prf.f1) == (1.0, 1.0, 1.0), key
        assert report.example_count == 10

    def test_constant_zero_backend_has_zero_recall(self, corpus, tokenizer):
        report = evaluate(corpus, MockBackend("constant", constant=0.0), tokenizer)
        assert report.example_level[OVERALL].recall == 0.0
        assert report.span_level[OVERALL].recall == 0.0

    def test_report_independent_of_jobs_and_batch_size(self, corpus, tokenizer):
        reference = evaluate(corpus, MockBackend("gold"), tokenizer)
        for jobs, batch_size in ((2, 3), (4, 1), (3, 10)):
            report = evaluate(
                corpus, MockBackend("gold"), tokenizer, jobs=jobs, batch_size=batch_size
            )
            assert report == reference

    def test_json_round_trip(self, corpus, tokenizer):
        report = evaluate(corpus, MockBackend("lexical"), tokenizer, threshold=0.4)
        assert EvalReport.from_json(report.to_json()) == report

    def test_render_table_shape(self, corpus, tokenizer):
        table = evaluate(corpus, MockBackend("gold"), tokenizer).render_table()
        lines = table.strip().splitlines()
        assert len(lines) == 5
        assert "Overall" in lines[1]
        assert lines[3].startswith("example")
        assert lines[4].startswith("span")
        assert "100.00" in lines[3]

    def test_render_csv_parses(self, corpus, tokenizer):
        import csv
        import io

        text = evaluate(corpus, MockBackend("gold"), tokenizer).render_csv()
        rows = list(csv.DictReader(io.StringIO(text)))
        assert len(rows) == 8  # 2 levels x 4 keys
        assert {r["level"] for r in rows} == {"example", "span"}

    def test_latency_sink_filled(self, corpus, tokenizer):
        latencies: list[float] = []
        evaluate(corpus, MockBackend("gold"), tokenizer, latency_sink=latencies)
        assert len(latencies) == len(corpus)
        assert all(t > 0 for t in latencies)

    def test_empty_corpus_rejected(self, tokenizer):
        with pytest.raises(ValueError, match="empty corpus"):
            evaluate([], MockBackend("gold"), tokenizer)

    def test_errors_name_the_example(self, corpus, tokenizer):
        class Broken:
            def metadata(self):
                from groundcheck.detection import BackendInfo

                return BackendInfo("broken", None, "1")

            def score_batch(self, seqs):
                raise RuntimeError("boom")

        with pytest.raises(RuntimeError, match=corpus[0].id):
            evaluate(corpus, Broken(), tokenizer)
