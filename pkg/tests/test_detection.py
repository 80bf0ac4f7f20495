"""Backend scoring, threshold aggregation, and span mapping tests."""

from __future__ import annotations

import http.server
import json
import random
import threading

import numpy as np
import pytest

from groundcheck.detection import (
    BackendError,
    GraphBackend,
    MockBackend,
    RemoteBackend,
    ScoreContractError,
    TokenScores,
    TransportError,
    aggregate_token_ranges,
    backend_from_spec,
    detect,
    detect_batch,
)
from groundcheck.encoding import (
    EncodedSequence,
    IGNORE_LABEL,
    Segment,
    assemble,
    labeled_sequence,
    project_labels,
)
from groundcheck.onnx_graph import GraphBuilder

from quartiles_example import (
    QUARTILES_PASSAGE,
    QUARTILES_QUESTION,
    QUARTILES_RESPONSE,
    lexical_flags,
    lexical_spans,
)

S, C, Q, A = Segment.Special, Segment.Context, Segment.Question, Segment.Answer


def make_seq(segments, answer_text="", offsets=None, labels=None, example_id="t"):
    """Hand-build an EncodedSequence with arbitrary segment layout."""
    n = len(segments)
    if offsets is None:
        offsets = []
        cursor = 0
        for seg in segments:
            if seg is A:
                offsets.append((cursor, cursor + 1))
                cursor += 2
            else:
                offsets.append(None)
    if labels is None:
        labels = [0 if seg is A else IGNORE_LABEL for seg in segments]
    if not answer_text:
        length = max((o[1] for o in offsets if o), default=0)
        answer_text = "x " * length
    return EncodedSequence(
        token_ids=tuple(range(10, 10 + n)),
        segments=tuple(segments),
        answer_offsets=tuple(offsets),
        labels=tuple(labels),
        truncated=False,
        example_id=example_id,
        question_text="",
        context_text="ctx",
        answer_text=answer_text,
    )


def scores_for(seq, probs):
    return TokenScores(probs=tuple(probs), backend_id="test")


class _FixedBackend:
    """Returns pre-baked probabilities, keyed by sequence identity."""

    def __init__(self, table):
        self.table = table

    def metadata(self):
        from groundcheck.detection import BackendInfo

        return BackendInfo(name="fixed", max_length=None, version="1")

    def score_batch(self, seqs):
        return [TokenScores(probs=tuple(self.table[id(s)]), backend_id="fixed") for s in seqs]


def brute_force_ranges(probs, segments, threshold):
    """Independent O(n^2) enumeration of all maximal qualifying intervals."""

    def qualifies(i, j):
        return all(
            segments[k] is A and probs[k] > threshold for k in range(i, j + 1)
        )

    n = len(probs)
    found = []
    for i in range(n):
        for j in range(i, n):
            if qualifies(i, j):
                left_ok = i == 0 or not qualifies(i - 1, j)
                right_ok = j == n - 1 or not qualifies(i, j + 1)
                if left_ok and right_ok:
                    found.append((i, j))
    return found


class TestAggregation:
    def test_reference_example(self):
        seq = make_seq([A, A, A, A, A])
        ranges = aggregate_token_ranges(scores_for(seq, [0.1, 0.7, 0.8, 0.2, 0.6]), seq, 0.5)
        assert ranges == [(1, 2), (4, 4)]

    def test_exactly_threshold_is_not_exceeding(self):
        seq = make_seq([A, A, A])
        assert aggregate_token_ranges(scores_for(seq, [0.5, 0.5, 0.5]), seq, 0.5) == []

    def test_all_above_is_one_run(self):
        seq = make_seq([A, A, A, A])
        assert aggregate_token_ranges(scores_for(seq, [0.9] * 4), seq, 0.5) == [(0, 3)]

    def test_non_answer_tokens_break_runs(self):
        seq = make_seq([S, A, A, S, A, S])
        ranges = aggregate_token_ranges(scores_for(seq, [0.9] * 6), seq, 0.5)
        assert ranges == [(1, 2), (4, 4)]

    def test_length_mismatch_rejected(self):
        seq = make_seq([A, A])
        with pytest.raises(ValueError, match="2 tokens"):
            aggregate_token_ranges(scores_for(seq, [0.9]), seq, 0.5)

    def test_threshold_domain_enforced(self):
        seq = make_seq([A])
        for bad in (0.0, 1.0, -0.1, 1.5):
            with pytest.raises(ValueError, match="threshold"):
                aggregate_token_ranges(scores_for(seq, [0.9]), seq, bad)

    def test_matches_brute_force_oracle(self):
        rng = random.Random(1)
        for _ in range(500):
            n = rng.randint(0, 16)
            segments = [rng.choice([S, C, Q, A]) for _ in range(n)]
            probs = [rng.choice([0.0, 0.3, 0.5, 0.50001, 0.7, 1.0]) for _ in range(n)]
            threshold = rng.choice([0.3, 0.5, 0.7])
            seq = make_seq(segments)
            got = aggregate_token_ranges(scores_for(seq, probs), seq, threshold)
            assert got == brute_force_ranges(probs, segments, threshold)


class TestDetect:
    def test_gold_backend_recovers_fixture_spans_exactly(self, corpus, tokenizer):
        backend = MockBackend("gold")
        for ex in corpus:
            seq = labeled_sequence(ex, tokenizer)
            result = detect(seq, backend)
            assert [(s.start, s.end) for s in result.spans] == [
                (g.start, g.end) for g in ex.gold_spans
            ]
            for span in result.spans:
                assert span.text == ex.answer[span.start : span.end]
                assert span.confidence == 1.0
            assert result.hallucinated is bool(ex.gold_spans)

    def test_all_zero_backend(self, corpus, tokenizer):
        seq = labeled_sequence(corpus[0], tokenizer)
        result = detect(seq, MockBackend("constant", constant=0.0))
        assert result.spans == ()
        assert result.hallucinated is False
        assert result.example_confidence == 0.0

    def test_span_confidence_is_mean_of_member_probs(self, tokenizer):
        seq = assemble("q", ["ctx"], "aa bb", tokenizer)
        probs = [0.0] * len(seq)
        i, j = seq.answer_token_indices
        probs[i], probs[j] = 0.6, 0.8
        backend = _FixedBackend({id(seq): probs})
        result = detect(seq, backend)
        assert len(result.spans) == 1
        assert result.spans[0].confidence == pytest.approx(0.7)
        assert result.example_confidence == pytest.approx(0.8)

    def test_spans_sorted_disjoint_within_answer(self, tokenizer):
        rng = random.Random(5)
        words = "aa bb cc dd ee ff gg".split()
        for _ in range(100):
            answer = " ".join(rng.choice(words) for _ in range(rng.randint(1, 10)))
            seq = assemble("q", ["ctx zz"], answer, tokenizer)
            probs = [rng.random() for _ in range(len(seq))]
            result = detect(seq, _FixedBackend({id(seq): probs}), threshold=0.5)
            prev_end = 0
            for span in result.spans:
                assert prev_end <= span.start < span.end <= len(answer)
                prev_end = span.end

    def test_threshold_monotonicity(self, tokenizer):
        rng = random.Random(9)
        seq = assemble("q", ["ctx"], "a b c d e f g h", tokenizer)
        probs = [rng.random() for _ in range(len(seq))]
        backend = _FixedBackend({id(seq): probs})
        coverage = {}
        for threshold in (0.2, 0.4, 0.6, 0.8):
            result = detect(seq, backend, threshold)
            coverage[threshold] = {
                c for s in result.spans for c in range(s.start, s.end)
            }
        assert coverage[0.8] <= coverage[0.6] <= coverage[0.4] <= coverage[0.2]

    def test_score_length_mismatch_rejected(self, tokenizer):
        seq = assemble("q", ["ctx"], "a b", tokenizer)
        backend = _FixedBackend({id(seq): [0.5]})
        with pytest.raises(ScoreContractError):
            detect(seq, backend)

    def test_out_of_range_prob_rejected(self, tokenizer):
        seq = assemble("q", ["ctx"], "a b", tokenizer)
        backend = _FixedBackend({id(seq): [0.0] * (len(seq) - 1) + [1.5]})
        with pytest.raises(ScoreContractError, match="1.5"):
            detect(seq, backend)

    def test_empty_batch(self):
        assert detect_batch([], MockBackend("constant")) == []


class TestMockBackend:
    def test_gold_requires_projected_labels(self, tokenizer):
        seq = assemble("q", ["ctx"], "a b", tokenizer)  # no project_labels call
        with pytest.raises(BackendError, match="gold labels"):
            MockBackend("gold").score_batch([seq])

    def test_constant_everywhere(self, tokenizer):
        seq = assemble("q", ["ctx"], "a b", tokenizer)
        (scores,) = MockBackend("constant", constant=0.25).score_batch([seq])
        assert set(scores.probs) == {0.25}

    def test_unknown_rule_rejected(self):
        with pytest.raises(ValueError, match="unknown mock rule"):
            MockBackend("psychic")

    def test_lexical_matches_independent_substring_oracle(self, tokenizer):
        seq = assemble(
            QUARTILES_QUESTION, [QUARTILES_PASSAGE], QUARTILES_RESPONSE, tokenizer
        )
        (scores,) = MockBackend("lexical").score_batch([seq])
        oracle = {
            (start, end): flagged
            for start, end, flagged in lexical_flags(QUARTILES_RESPONSE, QUARTILES_PASSAGE)
        }
        for i in seq.answer_token_indices:
            assert scores.probs[i] == (1.0 if oracle[seq.answer_offsets[i]] else 0.0)

    def test_lexical_grounded_terms_score_zero(self, tokenizer):
        # "highest" and "75%" both occur verbatim in the passage, so the
        # copy-detection rule cannot flag them
        seq = assemble("q", [QUARTILES_PASSAGE], "highest 75%", tokenizer)
        (scores,) = MockBackend("lexical").score_batch([seq])
        assert all(scores.probs[i] == 0.0 for i in seq.answer_token_indices)

    def test_lexical_spans_on_quartiles_response(self, tokenizer):
        seq = assemble(
            QUARTILES_QUESTION, [QUARTILES_PASSAGE], QUARTILES_RESPONSE, tokenizer
        )
        result = detect(seq, MockBackend("lexical"))
        expected = lexical_spans(QUARTILES_RESPONSE, QUARTILES_PASSAGE)
        assert [(s.start, s.end) for s in result.spans] == expected
        assert result.hallucinated

    def test_lexical_fully_copied_answer_is_clean(self, tokenizer):
        seq = assemble("q", [QUARTILES_PASSAGE], QUARTILES_PASSAGE, tokenizer)
        result = detect(seq, MockBackend("lexical"))
        assert result.spans == ()


def linear_scorer_model(tmp_path, vocab=64, name="scorer.onnx", bias=(0.0, 0.0)):
    """Tiny but real model file: one-hot -> embedding -> two-class logits."""
    rng = np.random.default_rng(7)
    table = rng.normal(size=(vocab, 2)).astype(np.float32)
    path = tmp_path / name
    (
        GraphBuilder(name="scorer", opset=17)
        .initializer("table", table)
        .initializer("bias", np.asarray(bias, dtype=np.float32))
        .input("token_ids", np.int64, ["batch", "seq"])
        .output("logits", np.float32, ["batch", "seq", 2])
        .node("Gather", ["table", "token_ids"], ["embedded"], axis=0)
        .node("Add", ["embedded", "bias"], ["logits"])
        .save(path)
    )
    return path, table


class TestGraphBackend:
    def test_probs_match_numpy_softmax_oracle(self, tmp_path, tokenizer):
        path, table = linear_scorer_model(tmp_path)
        backend = GraphBackend(path, max_length=64)
        seq = assemble("q", ["ctx words"], "a b c", tokenizer)
        ids = [t % 64 for t in seq.token_ids]
        clipped = make_seq_with_ids(seq, ids)
        (scores,) = backend.score_batch([clipped])
        logits = table[np.array(ids)]
        expected = np.exp(logits[:, 1]) / np.exp(logits).sum(axis=1)
        np.testing.assert_allclose(scores.probs, expected, atol=1e-6)
        assert all(0.0 <= p <= 1.0 for p in scores.probs)

    def test_batch_preserves_order_with_padding(self, tmp_path):
        path, table = linear_scorer_model(tmp_path)
        backend = GraphBackend(path, max_length=64)
        seqs = [
            make_seq([A] * n, example_id=f"s{n}")
            for n in (5, 2, 7)
        ]
        seqs = [make_seq_with_ids(s, [i % 64 for i in s.token_ids]) for s in seqs]
        results = backend.score_batch(seqs)
        assert [len(r.probs) for r in results] == [5, 2, 7]
        solo = [backend.score_batch([s])[0] for s in seqs]
        for batched, single in zip(results, solo):
            np.testing.assert_allclose(batched.probs, single.probs, atol=1e-6)

    def test_deterministic_across_runs(self, tmp_path):
        path, _ = linear_scorer_model(tmp_path)
        seq = make_seq([A, A, A])
        a = GraphBackend(path).score_batch([seq])[0]
        b = GraphBackend(path).score_batch([seq])[0]
        assert a.probs == b.probs

    def test_missing_model_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            GraphBackend(tmp_path / "missing.onnx")

    def test_corrupt_model_file(self, tmp_path):
        path = tmp_path / "bad.onnx"
        path.write_bytes(b"not a model at all")
        with pytest.raises(Exception):
            GraphBackend(path)

    def test_unsupported_device(self, tmp_path):
        path, _ = linear_scorer_model(tmp_path)
        with pytest.raises(BackendError, match="device unavailable"):
            GraphBackend(path, device="cuda")

    def test_sequence_over_limit_rejected(self, tmp_path):
        path, _ = linear_scorer_model(tmp_path)
        backend = GraphBackend(path, max_length=4)
        seq = make_seq([A] * 6)
        with pytest.raises(BackendError, match="limit"):
            backend.score_batch([seq])


def make_seq_with_ids(seq, ids):
    from dataclasses import replace

    return replace(seq, token_ids=tuple(ids))


class _GoldEchoHandler(http.server.BaseHTTPRequestHandler):
    """Loopback scorer: answers with gold probabilities looked up by token ids."""

    table: dict = {}
    mode = "ok"

    def do_POST(self):
        length = int(self.headers["Content-Length"])
        body = json.loads(self.rfile.read(length))
        if self.mode == "error":
            self.send_response(500)
            self.end_headers()
            return
        probs = []
        for ids in body["token_ids"]:
            row = self.table[tuple(ids)]
            if self.mode == "short":
                row = row[:-1]
            probs.append(row)
        payload = json.dumps({"probs": probs}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


@pytest.fixture()
def gold_echo_server(corpus, tokenizer):
    seqs = [labeled_sequence(ex, tokenizer) for ex in corpus]
    gold = MockBackend("gold")
    table = {
        tuple(seq.token_ids): list(scores.probs)
        for seq, scores in zip(seqs, gold.score_batch(seqs))
    }
    _GoldEchoHandler.table = table
    _GoldEchoHandler.mode = "ok"
    server = http.server.ThreadingHTTPServer(("127.0.0.1", 0), _GoldEchoHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}/score", seqs
    server.shutdown()


class TestRemoteBackend:
    def test_loopback_stub_equals_local_gold_mock(self, gold_echo_server):
        url, seqs = gold_echo_server
        remote = RemoteBackend(url, timeout=5)
        local = MockBackend("gold")
        for seq in seqs:
            assert detect(seq, remote) == detect(seq, local)

    def test_wrong_length_is_contract_violation(self, gold_echo_server):
        url, seqs = gold_echo_server
        _GoldEchoHandler.mode = "short"
        with pytest.raises(ScoreContractError):
            RemoteBackend(url, timeout=5).score_batch(seqs[:1])

    def test_server_error_is_transport_error(self, gold_echo_server):
        url, seqs = gold_echo_server
        _GoldEchoHandler.mode = "error"
        with pytest.raises(TransportError, match="500"):
            RemoteBackend(url, timeout=5).score_batch(seqs[:1])

    def test_unreachable_host_is_transport_error(self, tokenizer):
        seq = assemble("q", ["c"], "a", tokenizer)
        backend = RemoteBackend("http://127.0.0.1:1/score", timeout=0.5)
        with pytest.raises(TransportError):
            backend.score_batch([seq])


class TestBackendFromSpec:
    @pytest.mark.parametrize("spec,expected", [
        ("mock:gold", "mock:gold"),
        ("mock:lexical", "mock:lexical"),
        ("mock:constant:0.7", "mock:constant:0.7"),
        ("remote:http://host:99/x", "remote:http://host:99/x"),
    ])
    def test_spec_round_trip(self, spec, expected):
        assert backend_from_spec(spec).metadata().name == expected

    def test_graph_spec(self, tmp_path):
        path, _ = linear_scorer_model(tmp_path)
        backend = backend_from_spec(f"graph:{path}")
        assert backend.metadata().name == f"graph:{path.name}"

    def test_unknown_spec_rejected(self):
        with pytest.raises(ValueError, match="unknown backend"):
            backend_from_spec("quantum:foo")
