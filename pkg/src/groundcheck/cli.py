"""Command-line entry point: ingest, detect, evaluate, stats, serve.

Exit codes: 0 success, 1 runtime failure, 2 usage error. File outputs are
atomic (temp file + rename). ANSI highlighting honors NO_COLOR and is only
used on a terminal.
"""

from __future__ import annotations

import json
import os
import statistics
import sys
import tempfile
import time
from pathlib import Path

import click

from groundcheck import __version__
from groundcheck.config import load_config
from groundcheck.corpus import (
    CorpusValidationError,
    Split,
    corpus_stats,
    filter_split,
    load_corpus,
    load_normalized,
    save_corpus,
)
from groundcheck.detection import BackendError, backend_from_spec, detect
from groundcheck.encoding import EncodingError, assemble, load_tokenizer
from groundcheck.metrics import evaluate


def _atomic_write(path: str, content: str) -> None:
    target = Path(path)
    fd, tmp = tempfile.mkstemp(dir=target.parent or Path("."), prefix=target.name + ".")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(content)
        os.replace(tmp, target)
    except BaseException:
        os.unlink(tmp)
        raise


def _emit(out: str, content: str) -> None:
    if out == "-":
        click.echo(content, nl=False)
    else:
        _atomic_write(out, content)


def _use_color() -> bool:
    return sys.stdout.isatty() and not os.environ.get("NO_COLOR")


@click.group()
@click.version_option(version=__version__)
@click.option("--verbose", is_flag=True, help="Print the resolved configuration before running.")
@click.pass_context
def main(ctx, verbose):
    """Hallucination detection engine for RAG triples."""
    ctx.ensure_object(dict)
    ctx.obj["verbose"] = verbose


def _verbose_dump(ctx, **settings) -> None:
    if ctx.obj.get("verbose"):
        click.echo(f"config: {json.dumps(settings, default=str)}", err=True)


@main.command()
@click.option("--source", "source_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--responses", "responses_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", default="-", help="Output path for the normalized corpus; '-' streams to stdout.")
@click.pass_context
def ingest(ctx, source_path, responses_path, out):
    """Normalize a raw source+responses corpus into the internal format."""
    _verbose_dump(ctx, source=source_path, responses=responses_path, out=out)
    try:
        examples = load_corpus(source_path, responses_path)
    except CorpusValidationError as exc:
        raise click.ClickException(str(exc))
    import io

    buf = io.StringIO()
    save_corpus(examples, buf)
    _emit(out, buf.getvalue())
    if out != "-":
        click.echo(f"wrote {len(examples)} examples to {out}", err=True)


@main.command("detect")
@click.option("--question", default="", help="Question text (empty for summarization-style input).")
@click.option(
    "--context",
    "context_files",
    multiple=True,
    required=True,
    type=click.Path(exists=True, dir_okay=False),
    help="Context passage file; repeat for multiple passages.",
)
@click.option("--answer", required=True, help="Answer text to check.")
@click.option("--threshold", default=0.5, show_default=True)
@click.option("--backend", "backend_spec", default="mock:lexical", show_default=True)
@click.option("--tokenizer", "tokenizer_spec", default="whitespace", show_default=True)
@click.option("--max-length", default=4096, show_default=True)
@click.option("--json", "as_json", is_flag=True, help="Print the raw result object as JSON.")
@click.pass_context
def detect_cmd(ctx, question, context_files, answer, threshold, backend_spec, tokenizer_spec, max_length, as_json):
    """Run one-shot detection over a (question, contexts, answer) triple."""
    _verbose_dump(
        ctx,
        question=question,
        contexts=list(context_files),
        backend=backend_spec,
        tokenizer=tokenizer_spec,
        threshold=threshold,
        max_length=max_length,
    )
    contexts = [Path(f).read_text(encoding="utf-8") for f in context_files]
    try:
        tokenizer = load_tokenizer(tokenizer_spec)
        backend = backend_from_spec(backend_spec, max_length=max_length)
        seq = assemble(question, contexts, answer, tokenizer, max_length=max_length)
        result = detect(seq, backend, threshold)
    except (EncodingError, BackendError, ValueError, OSError) as exc:
        raise click.ClickException(str(exc))

    if as_json:
        click.echo(json.dumps(result.to_dict(), indent=2))
        return
    if not result.spans:
        click.echo("no hallucination detected")
        return
    click.echo(f"{len(result.spans)} hallucinated span(s):")
    for span in result.spans:
        click.echo(f"  [{span.start}:{span.end}] conf={span.confidence:.3f} {span.text!r}")
    if _use_color():
        highlighted = []
        cursor = 0
        for span in result.spans:
            highlighted.append(answer[cursor : span.start])
            highlighted.append(f"\x1b[41;97m{answer[span.start:span.end]}\x1b[0m")
            cursor = span.end
        highlighted.append(answer[cursor:])
        click.echo("".join(highlighted))


@main.command("evaluate")
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--split", type=click.Choice(["train", "dev", "test", "all"]), default="test", show_default=True)
@click.option("--backend", "backend_spec", default="mock:gold", show_default=True)
@click.option("--threshold", default=0.5, show_default=True)
@click.option("--tokenizer", "tokenizer_spec", default="whitespace", show_default=True)
@click.option("--max-length", default=4096, show_default=True)
@click.option("--emit", type=click.Choice(["json", "table", "csv"]), default="table", show_default=True)
@click.option("--jobs", default=1, show_default=True)
@click.option("--batch-size", default=8, show_default=True)
@click.option("--span-average", type=click.Choice(["micro", "macro"]), default="micro", show_default=True)
@click.option("--out", default="-", show_default=True)
@click.pass_context
def evaluate_cmd(
    ctx, corpus_path, split, backend_spec, threshold, tokenizer_spec,
    max_length, emit, jobs, batch_size, span_average, out,
):
    """Evaluate a backend against a normalized corpus split."""
    _verbose_dump(
        ctx,
        corpus=corpus_path,
        split=split,
        backend=backend_spec,
        threshold=threshold,
        tokenizer=tokenizer_spec,
        emit=emit,
        jobs=jobs,
        batch_size=batch_size,
        span_average=span_average,
    )
    try:
        examples = load_normalized(corpus_path)
        if split != "all":
            examples = filter_split(examples, Split(split))
        if not examples:
            raise click.ClickException(f"no examples in split {split!r}")
        tokenizer = load_tokenizer(tokenizer_spec)
        backend = backend_from_spec(backend_spec, max_length=max_length)
        latencies: list[float] = []
        started = time.perf_counter()
        report = evaluate(
            examples,
            backend,
            tokenizer,
            threshold=threshold,
            max_length=max_length,
            jobs=jobs,
            batch_size=batch_size,
            span_average=span_average,
            latency_sink=latencies,
        )
        wall = time.perf_counter() - started
    except (CorpusValidationError, EncodingError, BackendError, RuntimeError, ValueError, OSError) as exc:
        raise click.ClickException(str(exc))

    median_ms = statistics.median(latencies) * 1000.0
    click.echo(
        f"throughput: {len(examples) / wall:.1f} examples/s "
        f"(n={len(examples)}, jobs={jobs}, median {median_ms:.3f} ms/example)",
        err=True,
    )
    rendered = {
        "json": lambda: report.to_json() + "\n",
        "table": report.render_table,
        "csv": report.render_csv,
    }[emit]()
    _emit(out, rendered)


@main.command()
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--tokenizer", "tokenizer_spec", default="whitespace", show_default=True)
@click.pass_context
def stats(ctx, corpus_path, tokenizer_spec):
    """Token-length statistics over the assembled sequences of a corpus."""
    _verbose_dump(ctx, corpus=corpus_path, tokenizer=tokenizer_spec)
    try:
        examples = load_normalized(corpus_path)
        tokenizer = load_tokenizer(tokenizer_spec)
        result = corpus_stats(examples, tokenizer)
    except (CorpusValidationError, EncodingError, ValueError, OSError) as exc:
        raise click.ClickException(str(exc))
    click.echo(json.dumps(result.to_dict(), indent=2))


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--host", default=None, help="Override the configured bind host.")
@click.option("--port", default=None, type=int, help="Override the configured port.")
@click.pass_context
def serve(ctx, config_path, host, port):
    """Boot the HTTP detection service."""
    import uvicorn

    from groundcheck.service import create_app

    try:
        config = load_config(config_path)
        if host:
            config.host = host
        if port:
            config.port = port
        _verbose_dump(ctx, **config.__dict__)
        app = create_app(config)
    except (ValueError, OSError, BackendError, EncodingError) as exc:
        raise click.ClickException(str(exc))
    uvicorn.run(app, host=config.host, port=config.port)


if __name__ == "__main__":
    main()
