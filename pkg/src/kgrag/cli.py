"""Command-line client for the question-answering service.

Subcommands mirror the HTTP endpoints. Without --server everything runs
in-process against the same engine the service uses; with --server the CLI
is a thin HTTP client, so a long-running service keeps the graph and caches
warm across invocations.

Exit codes: 0 success, 1 usage/config, 2 data error, 3 backend error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import httpx

from . import errors
from .bench.grid import RunManifest
from .config import load_config
from .errors import (
    BackendUnavailable,
    ConfigError,
    KgragError,
    MalformedBackendResponse,
    exit_code_for,
)
from .pipeline import Variant
from .runtime import Engine, version_string

logger = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; this CLI reserves 2 for data errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kgrag", description=__doc__)
    parser.add_argument("--config", help="TOML config file")
    parser.add_argument("--server", help="base URL of a running kgrag service")
    parser.add_argument("--json", action="store_true", help="machine-readable output")
    parser.add_argument("--seed", type=int, help="inference seed override")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    parser.add_argument(
        "--force", action="store_true", help="skip config range validation"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="start the HTTP service")
    serve.add_argument("--host")
    serve.add_argument("--port", type=int)
    serve.add_argument(
        "--warm-cache",
        action="store_true",
        help="embed all KG triples before serving (default: lazy)",
    )

    sub.add_parser("ingest", help="(re)build the knowledge graph and print stats")
    sub.add_parser("stats", help="print knowledge-graph degree statistics")

    retrieve = sub.add_parser("retrieve", help="inspect candidate retrieval")
    retrieve.add_argument("--entity", action="append", required=True, dest="entities")
    retrieve.add_argument("--hops", type=int)
    retrieve.add_argument("--direction", choices=["outgoing", "bidirectional"])

    ask = sub.add_parser("ask", help="answer one question")
    ask.add_argument("question")
    ask.add_argument("--entity", action="append", default=[], dest="entities")
    ask.add_argument(
        "--variant",
        choices=[v.value for v in Variant],
        default=Variant.KG_RAG.value,
    )
    ask.add_argument("--hops", type=int)
    ask.add_argument("--top-k", type=int)
    ask.add_argument("--direction", choices=["outgoing", "bidirectional"])

    sub.add_parser("warm-cache", help="embed all KG triples into the cache")

    bench = sub.add_parser("bench", help="run a benchmark manifest")
    bench.add_argument("--manifest", required=True)
    bench.add_argument("--dry-run", action="store_true")
    bench.add_argument("--results-dir")

    return parser


# ---------------------------------------------------------------------------
# Remote transport
# ---------------------------------------------------------------------------

_ERROR_TYPES = {
    name: obj
    for name, obj in vars(errors).items()
    if isinstance(obj, type) and issubclass(obj, KgragError)
}


class RemoteRunner:
    """Thin HTTP client over the service endpoints."""

    def __init__(self, base_url: str, transport: httpx.BaseTransport | None = None):
        self._client = httpx.Client(
            base_url=base_url, timeout=600.0, transport=transport
        )

    def _call(self, method: str, path: str, payload: dict | None = None) -> dict:
        try:
            response = self._client.request(method, path, json=payload)
        except httpx.HTTPError as exc:
            raise BackendUnavailable(f"cannot reach server: {exc}") from exc
        if response.status_code >= 400:
            try:
                error = response.json()["error"]
            except (ValueError, KeyError) as exc:
                raise MalformedBackendResponse(
                    f"server error {response.status_code}: {response.text[:200]}"
                ) from exc
            exc_cls = _ERROR_TYPES.get(error.get("type"), KgragError)
            raise _rebuild_error(exc_cls, error)
        return response.json()

    def stats(self):
        return self._call("GET", "/stats")

    def ingest(self):
        return self._call("POST", "/ingest", {})

    def retrieve(self, entities, n_hops, direction):
        payload = self._call(
            "POST",
            "/retrieve",
            {"entities": entities, "n_hops": n_hops, "direction": direction},
        )
        return payload["hops"]

    def ask(self, **kwargs):
        return self._call("POST", "/ask", kwargs)

    def warm_cache(self):
        return self._call("POST", "/warm-cache", {})

    def bench(self, manifest: dict, dry_run: bool, results_dir):
        return self._call(
            "POST",
            "/bench",
            {"manifest": manifest, "dry_run": dry_run, "results_dir": results_dir},
        )


def _rebuild_error(exc_cls, error: dict) -> KgragError:
    message = error.get("message", "unknown server error")
    try:
        return exc_cls(message)
    except TypeError:
        exc = KgragError(message)
        exc.__class__ = exc_cls
        return exc


class LocalRunner:
    """Runs the same operations in-process; no server required."""

    def __init__(self, engine: Engine):
        self.engine = engine

    def stats(self):
        return self.engine.stats_payload()

    def ingest(self):
        self.engine.rebuild_graph()
        return self.engine.stats_payload()

    def retrieve(self, entities, n_hops, direction):
        return self.engine.retrieve_payload(entities, n_hops, direction)

    def ask(self, **kwargs):
        return self.engine.ask(**kwargs).to_dict()

    def warm_cache(self):
        return self.engine.warm_cache()

    def bench(self, manifest: dict, dry_run: bool, results_dir):
        parsed = RunManifest.from_dict(manifest)
        plan = self.engine.bench_plan(parsed)
        if dry_run:
            return {"plan": plan, "results": None, "files": None}
        results, files = self.engine.run_bench(
            parsed,
            results_dir=results_dir,
            progress=_print_cell_progress,
        )
        return {
            "plan": plan,
            "results": [r.to_dict() for r in results],
            "files": files or None,
        }


def _print_cell_progress(cell, result, cached):
    suffix = " (cached)" if cached else ""
    print(
        f"cell {cell.cell_id()}: mean_hit1={result.mean_hit1:.4f} "
        f"std={result.std_hit1:.4f}{suffix}",
        file=sys.stderr,
    )


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _make_runner(args):
    if args.server:
        return RemoteRunner(args.server)
    config = load_config(args.config, force=args.force)
    if args.seed is not None:
        config = config.apply_overrides(seed=args.seed)
    return LocalRunner(Engine(config))


def _emit(payload, as_json: bool, pretty_printer=None):
    if as_json or pretty_printer is None:
        print(json.dumps(payload, indent=1, sort_keys=True))
    else:
        pretty_printer(payload)


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    config = load_config(args.config, force=args.force)
    engine = Engine(config)
    engine.ensure_graph()
    if args.warm_cache:
        summary = engine.warm_cache()
        print(f"warmed cache: {summary['embedded']} new / {summary['total']} triples")
    app = create_app(engine=engine)
    uvicorn.run(
        app,
        host=args.host or config.service.host,
        port=args.port or config.service.port,
        log_level="debug" if args.verbose else "info",
    )
    return 0


def cmd_ingest(args) -> int:
    runner = _make_runner(args)
    stats = runner.ingest() if args.command == "ingest" else runner.stats()
    print(json.dumps(stats, indent=1, sort_keys=True))
    if stats["triples"] == 0:
        print("warning: knowledge graph is empty", file=sys.stderr)
    return 0


def cmd_retrieve(args) -> int:
    runner = _make_runner(args)
    hops = runner.retrieve(args.entities, args.hops, args.direction)
    print(json.dumps(hops, indent=1, sort_keys=True))
    return 0


def _print_answer_record(record: dict):
    print(f"Question: {record['question']}")
    print(f"Variant:  {record['variant']}")
    if record.get("reasoning_chain"):
        print("\nReasoning chain:")
        for line in record["reasoning_chain"].splitlines():
            print(f"  {line}")
    traces = record.get("traces", [])
    if record.get("decomposition") and traces:
        print("\nSub-questions:")
        for trace in traces:
            print(f"  {trace['index'] + 1}. {trace['sub_question_effective']}")
            if trace["selected"]:
                best = trace["selected"][0]
                print(f"     top triple: {best['text']}  (score {best['score']:.3f})")
            print(f"     answer: {trace['sub_answer']}")
    if record.get("error"):
        print(f"\nError: {record['error']}")
    print(f"\nFinal answer: {record['answer_line']}")


def cmd_ask(args) -> int:
    runner = _make_runner(args)
    record = runner.ask(
        question=args.question,
        entities=args.entities,
        variant=args.variant,
        n_hops=args.hops,
        top_k=args.top_k,
        direction=args.direction,
        seed=args.seed,
    )
    _emit(record, args.json, _print_answer_record)
    return 0


def cmd_warm_cache(args) -> int:
    runner = _make_runner(args)
    summary = runner.warm_cache()
    print(json.dumps(summary, sort_keys=True))
    return 0


def _print_bench_table(results: list[dict]):
    header = f"{'dataset':<12} {'variant':<8} {'N':>3} {'K':>3} {'mean':>8} {'std':>8}"
    print(header)
    print("-" * len(header))
    for r in results:
        n = "-" if r["n_hops"] is None else r["n_hops"]
        k = "-" if r["top_k"] is None else r["top_k"]
        print(
            f"{r['dataset']:<12} {r['variant']:<8} {n!s:>3} {k!s:>3} "
            f"{r['mean_hit1']:>8.4f} {r['std_hit1']:>8.4f}"
        )


def cmd_bench(args) -> int:
    manifest_path = Path(args.manifest)
    if not manifest_path.is_file():
        raise ConfigError(f"manifest not found: {manifest_path}")
    with open(manifest_path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    # Relative results_dir entries are resolved against the manifest location.
    results_dir = args.results_dir
    if results_dir is None and manifest.get("results_dir"):
        raw = Path(manifest["results_dir"])
        results_dir = str(raw if raw.is_absolute() else manifest_path.parent / raw)
        manifest = dict(manifest, results_dir=results_dir)

    runner = _make_runner(args)
    payload = runner.bench(manifest, args.dry_run, results_dir)
    if args.dry_run:
        print(json.dumps(payload["plan"], indent=1, sort_keys=True))
        return 0
    if args.json:
        print(json.dumps(payload, indent=1, sort_keys=True))
    else:
        _print_bench_table(payload["results"])
        if payload.get("files"):
            for kind, path in sorted(payload["files"].items()):
                print(f"{kind}: {path}")
    return 0


_COMMANDS = {
    "serve": cmd_serve,
    "ingest": cmd_ingest,
    "stats": cmd_ingest,
    "retrieve": cmd_retrieve,
    "ask": cmd_ask,
    "warm-cache": cmd_warm_cache,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    logger.debug("kgrag %s", version_string())
    try:
        return _COMMANDS[args.command](args)
    except KgragError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if isinstance(exc, ConfigError) and exc.problems:
            for problem in exc.problems:
                print(f"  - {problem}", file=sys.stderr)
        return exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
