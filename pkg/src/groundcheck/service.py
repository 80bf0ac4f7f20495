"""HTTP front door: detection and health endpoints.

Endpoints:
    POST /v1/detect        one (question, contexts, answer) triple
    POST /v1/detect/batch  a list of triples; per-item errors are inline
    GET  /healthz          200 once the backend is loaded, 503 before
    GET  /v1/info          backend metadata and effective defaults

Scoring requests funnel into a bounded micro-batching queue (one worker
drains up to max_batch items per backend call, waiting at most
batch_wait_ms); a full queue surfaces as 503 back-pressure. All span
computation is exactly the library's detect() path, so endpoint responses
are byte-identical to direct library calls.
"""

from __future__ import annotations

import queue
import threading
import time
from concurrent.futures import Future
from typing import Any, Sequence

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel, ValidationError

from groundcheck import __version__
from groundcheck.config import ServiceConfig, build_backend
from groundcheck.detection import (
    BackendError,
    ScoringBackend,
    TokenScores,
    result_from_scores,
    validate_scores,
)
from groundcheck.encoding import (
    AnswerTooLongError,
    EncodedSequence,
    EncodingError,
    assemble,
    load_tokenizer,
)


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message

    def body(self) -> dict:
        return {"error": {"code": self.code, "message": self.message}}


class DetectRequest(BaseModel):
    question: str = ""
    contexts: list[str]
    answer: str
    threshold: float | None = None


class BatchScheduler:
    """Funnels concurrent scoring requests into bounded backend batches."""

    def __init__(
        self,
        backend: ScoringBackend,
        max_batch: int,
        max_wait_ms: float,
        queue_size: int,
    ):
        self._backend = backend
        self._max_batch = max_batch
        self._max_wait = max_wait_ms / 1000.0
        self._queue: queue.Queue = queue.Queue(maxsize=queue_size)
        self._worker = threading.Thread(target=self._run, daemon=True)
        self._worker.start()

    def submit(self, seq: EncodedSequence) -> Future:
        future: Future = Future()
        try:
            self._queue.put_nowait((seq, future))
        except queue.Full:
            raise ApiError(503, "overloaded", "scoring queue is full, retry later")
        return future

    def score(self, seq: EncodedSequence) -> TokenScores:
        return self.submit(seq).result()

    def stop(self) -> None:
        self._queue.put(None)
        self._worker.join(timeout=5)

    def _run(self) -> None:
        while True:
            item = self._queue.get()
            if item is None:
                return
            batch = [item]
            deadline = time.monotonic() + self._max_wait
            while len(batch) < self._max_batch:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    break
                try:
                    extra = self._queue.get(timeout=remaining)
                except queue.Empty:
                    break
                if extra is None:
                    self._flush(batch)
                    return
                batch.append(extra)
            self._flush(batch)

    def _flush(self, batch) -> None:
        seqs = [seq for seq, _ in batch]
        try:
            scored = self._backend.score_batch(seqs)
            if len(scored) != len(seqs):
                raise BackendError(
                    f"backend returned {len(scored)} score vectors for {len(seqs)} sequences"
                )
            for (seq, future), scores in zip(batch, scored):
                try:
                    future.set_result(validate_scores(scores, seq))
                except Exception as exc:
                    future.set_exception(exc)
        except Exception as exc:
            for _, future in batch:
                if not future.done():
                    future.set_exception(exc)


def create_app(config: ServiceConfig | None = None, defer_backend: bool = False) -> FastAPI:
    config = config or ServiceConfig()
    app = FastAPI(title="groundcheck", version=__version__)
    if config.cors_origins:
        app.add_middleware(
            CORSMiddleware,
            allow_origins=config.cors_origins,
            allow_methods=["*"],
            allow_headers=["*"],
        )

    state = app.state
    state.config = config
    state.backend = None
    state.tokenizer = None
    state.scheduler = None

    def load_backend() -> None:
        backend = build_backend(config)
        state.tokenizer = load_tokenizer(config.tokenizer_path)
        state.scheduler = BatchScheduler(
            backend,
            max_batch=config.max_batch,
            max_wait_ms=config.batch_wait_ms,
            queue_size=config.queue_size,
        )
        state.backend = backend

    state.load_backend = load_backend
    if not defer_backend:
        load_backend()

    @app.exception_handler(ApiError)
    async def on_api_error(request: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status, content=exc.body())

    @app.exception_handler(RequestValidationError)
    async def on_validation_error(request: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=400,
            content={"error": {"code": "bad_request", "message": str(exc.errors()[:3])}},
        )

    def run_detection(item: DetectRequest) -> dict:
        if state.backend is None:
            raise ApiError(503, "backend_unavailable", "backend not loaded")
        if not item.answer:
            raise ApiError(400, "bad_request", "answer must be non-empty")
        if not item.contexts or not any(item.contexts):
            raise ApiError(400, "bad_request", "contexts must be non-empty")
        threshold = item.threshold if item.threshold is not None else config.threshold
        if not 0.0 < threshold < 1.0:
            raise ApiError(400, "bad_request", f"threshold must be in (0, 1), got {threshold}")
        started = time.perf_counter()
        try:
            seq = assemble(
                item.question,
                item.contexts,
                item.answer,
                state.tokenizer,
                max_length=config.max_length,
            )
        except AnswerTooLongError as exc:
            raise ApiError(413, "answer_too_long", str(exc))
        except EncodingError as exc:
            message = str(exc)
            if "max_length" in message:
                raise ApiError(413, "answer_too_long", message)
            raise ApiError(400, "bad_request", message)
        try:
            scores = state.scheduler.score(seq)
        except ApiError:
            raise
        except BackendError as exc:
            raise ApiError(503, "backend_unavailable", str(exc))
        result = result_from_scores(seq, scores, threshold)
        latency_ms = (time.perf_counter() - started) * 1000.0
        return {
            "spans": [s.to_dict() for s in result.spans],
            "hallucinated": result.hallucinated,
            "example_confidence": result.example_confidence,
            "truncated": result.truncated,
            "model": state.backend.metadata().name,
            "latency_ms": latency_ms,
        }

    @app.post("/v1/detect")
    def detect_endpoint(item: DetectRequest) -> JSONResponse:
        return JSONResponse(run_detection(item))

    @app.post("/v1/detect/batch")
    def detect_batch_endpoint(items: list[Any]) -> JSONResponse:
        if len(items) > config.max_batch:
            raise ApiError(
                413,
                "batch_too_large",
                f"batch of {len(items)} exceeds max_batch={config.max_batch}",
            )
        responses: list[dict] = []
        for raw in items:
            try:
                if not isinstance(raw, dict):
                    raise ApiError(400, "bad_request", "batch items must be objects")
                try:
                    item = DetectRequest.model_validate(raw)
                except ValidationError as exc:
                    raise ApiError(400, "bad_request", str(exc.errors()[:3]))
                responses.append(run_detection(item))
            except ApiError as exc:
                responses.append(exc.body())
        return JSONResponse(responses)

    @app.get("/healthz")
    def healthz() -> JSONResponse:
        if state.backend is None:
            return JSONResponse(
                status_code=503,
                content={"status": "loading", "backend": None},
            )
        return JSONResponse({"status": "ok", "backend": state.backend.metadata().name})

    @app.get("/v1/info")
    def info() -> JSONResponse:
        if state.backend is None:
            raise ApiError(503, "backend_unavailable", "backend not loaded")
        meta = state.backend.metadata()
        return JSONResponse(
            {
                "model": meta.name,
                "max_length": config.max_length,
                "default_threshold": config.threshold,
                "version": __version__,
                "backend_version": meta.version,
                "max_batch": config.max_batch,
            }
        )

    @app.on_event("shutdown")
    def shutdown() -> None:
        if state.scheduler is not None:
            state.scheduler.stop()

    return app
