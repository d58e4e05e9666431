"""Composition root: builds backends, graph, and caches from a RunConfig and
exposes the operations the service endpoints and the CLI both call."""

from __future__ import annotations

import json
import logging
import subprocess
import threading
from dataclasses import replace
from importlib import metadata
from pathlib import Path

from .bench.data import QARecord, load_metaqa_qa
from .bench.grid import EvalResult, RunManifest, emit_results, run_grid
from .config import RunConfig
from .embedding import EmbeddingCache, HashEmbeddingBackend, HttpEmbeddingBackend, embed_texts
from .errors import ConfigError
from .kg_store import KnowledgeGraph, degree_stats, load_graph, resolve_entity
from .llm_gateway import (
    DEFAULT_PROFILES,
    HttpCompletionBackend,
    ScriptedBackend,
    load_rules,
    resolve_auth_token,
)
from .pipeline import AnswerRecord, PipelineContext, PipelineParams, Variant, answer_question
from .prompts import PromptLibrary
from .retrieval import Direction, retrieve_candidates, verbalize_triple

logger = logging.getLogger(__name__)

_HOP_LABELS = {"hop1": 1, "hop2": 2, "hop3": 3, "1hop": 1, "2hop": 2, "3hop": 3}


def version_string() -> str:
    try:
        described = subprocess.run(
            ["git", "describe", "--tags", "--always", "--dirty"],
            capture_output=True,
            text=True,
            timeout=5,
        )
        if described.returncode == 0 and described.stdout.strip():
            return f"kgrag-{_package_version()}+{described.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return f"kgrag-{_package_version()}"


def _package_version() -> str:
    try:
        return metadata.version("kgrag")
    except metadata.PackageNotFoundError:
        return "0.0.0"


def build_llm_backend(config: RunConfig):
    llm = config.llm
    if llm.mode == "scripted":
        rules = load_rules(llm.rules_path) if llm.rules_path else []
        return ScriptedBackend(
            rules=rules,
            oracle_mode=llm.oracle_mode,
            default_response=llm.default_response,
        )
    return HttpCompletionBackend(
        endpoint=llm.endpoint,
        model=llm.model,
        auth_token=resolve_auth_token(llm.auth_env),
        timeout=llm.timeout_s,
        unsupported_params=llm.unsupported_params,
    )


def build_embedding_backend(config: RunConfig):
    emb = config.embedding
    if emb.mode == "hash":
        return HashEmbeddingBackend()
    return HttpEmbeddingBackend(
        endpoint=emb.endpoint,
        model=emb.model,
        dim=emb.dim,
        auth_token=resolve_auth_token(emb.auth_env),
    )


def build_profiles(config: RunConfig):
    profiles = dict(DEFAULT_PROFILES)
    for role, overrides in config.profile_overrides.items():
        if role not in profiles:
            raise ConfigError(f"[profiles] unknown role {role!r}")
        base = profiles[role]
        fields = set(type(base).__dataclass_fields__)
        unknown = set(overrides) - fields
        if unknown:
            raise ConfigError(f"[profiles.{role}] unknown keys {sorted(unknown)}")
        coerced = dict(overrides)
        if "stop_sequences" in coerced:
            coerced["stop_sequences"] = tuple(coerced["stop_sequences"])
        profiles[role] = replace(base, **coerced)
    return profiles


class Engine:
    """Holds the expensive shared state (graph, caches, backends) for the
    lifetime of a service process or a CLI invocation."""

    def __init__(self, config: RunConfig):
        self.config = config
        self.llm = build_llm_backend(config)
        self.embedder = build_embedding_backend(config)
        self.cache = EmbeddingCache(
            self.embedder.fingerprint,
            self.embedder.dim,
            config.embedding.cache_path or None,
        )
        self.prompts = PromptLibrary.from_dir(
            config.pipeline.template_dir, config.pipeline.icl_path
        )
        self.profiles = build_profiles(config)
        self._graph: KnowledgeGraph | None = None
        self._graph_lock = threading.Lock()
        self._datasets: dict[str, list[QARecord]] = {}

    # -- graph ------------------------------------------------------------

    @property
    def graph_loaded(self) -> bool:
        return self._graph is not None

    def ensure_graph(self) -> KnowledgeGraph:
        with self._graph_lock:
            if self._graph is None:
                if not self.config.kg.path:
                    raise ConfigError("[kg] path is not configured")
                logger.info("building knowledge graph from %s", self.config.kg.path)
                self._graph = load_graph(
                    self.config.kg.path,
                    self.config.kg.delimiter,
                    self.config.kg.skip_blank,
                )
            return self._graph

    def rebuild_graph(self, kb_path: str | None = None) -> KnowledgeGraph:
        if kb_path:
            self.config.kg.path = kb_path
        with self._graph_lock:
            self._graph = None
        return self.ensure_graph()

    # -- operations --------------------------------------------------------

    def stats_payload(self) -> dict:
        return degree_stats(self.ensure_graph()).to_json_dict()

    def retrieve_payload(
        self,
        entities: list[str],
        n_hops: int | None = None,
        direction: str | None = None,
    ) -> dict:
        graph = self.ensure_graph()
        seeds = [resolve_entity(graph, name) for name in entities]
        buckets = retrieve_candidates(
            graph,
            seeds,
            n_hops or self.config.pipeline.n_hops,
            Direction(direction or self.config.pipeline.direction),
        )
        return {
            str(hop): [verbalize_triple(graph, t).text for t in bucket]
            for hop, bucket in enumerate(buckets.buckets, start=1)
        }

    def pipeline_context(self, need_graph: bool = True) -> PipelineContext:
        return PipelineContext(
            graph=self.ensure_graph() if need_graph else self._graph,
            llm=self.llm,
            embedder=self.embedder,
            cache=self.cache,
            prompts=self.prompts,
            profiles=self.profiles,
        )

    def ask(
        self,
        question: str,
        entities: list[str],
        variant: str = Variant.KG_RAG.value,
        n_hops: int | None = None,
        top_k: int | None = None,
        direction: str | None = None,
        seed: int | None = None,
    ) -> AnswerRecord:
        variant_enum = Variant(variant)
        pipe = self.config.pipeline
        params = PipelineParams(
            n_hops=n_hops or pipe.n_hops,
            top_k=top_k or pipe.top_k,
            direction=Direction(direction or pipe.direction),
            seed=pipe.seed if seed is None else seed,
            similarity=self.config.embedding.similarity,
            max_sub_questions=pipe.max_sub_questions,
        )
        ctx = self.pipeline_context(need_graph=variant_enum.uses_retrieval)
        return answer_question(ctx, question, entities, variant_enum, params)

    def warm_cache(self) -> dict:
        """Embed every verbalized triple into the cache."""
        graph = self.ensure_graph()
        texts = [verbalize_triple(graph, t).text for t in graph.triples]
        before = len(self.cache)
        chunk = 1024
        for start in range(0, len(texts), chunk):
            embed_texts(self.embedder, self.cache, texts[start : start + chunk])
        return {"embedded": len(self.cache) - before, "total": len(texts)}

    # -- benchmarking -------------------------------------------------------

    def load_dataset(self, name: str) -> list[QARecord]:
        if name not in self._datasets:
            if name not in self.config.qa_paths:
                raise ConfigError(
                    f"[qa] no dataset named {name!r} configured",
                    problems=[f"known datasets: {sorted(self.config.qa_paths)}"],
                )
            self._datasets[name] = load_metaqa_qa(
                self.config.qa_paths[name], _HOP_LABELS.get(name)
            )
        return self._datasets[name]

    def bench_plan(self, manifest: RunManifest) -> list[dict]:
        return [
            {
                "dataset": c.dataset,
                "variant": c.variant,
                "N": c.n_hops,
                "K": c.top_k,
                "seeds": len(manifest.seeds),
                "sample_size": manifest.sample_size,
            }
            for c in manifest.cells()
        ]

    def run_bench(
        self,
        manifest: RunManifest,
        results_dir=None,
        progress=None,
    ) -> tuple[list[EvalResult], dict]:
        datasets = {name: self.load_dataset(name) for name in manifest.datasets}
        target = results_dir or manifest.results_dir
        needs_graph = any(Variant(v).uses_retrieval for v in manifest.variants)
        ctx = self.pipeline_context(need_graph=needs_graph)
        results = run_grid(
            ctx,
            datasets,
            manifest,
            results_dir=target,
            concurrency=self.config.limits.llm_concurrency,
            progress=progress,
        )
        files = {}
        if target is not None:
            target = Path(target)
            csv_path = target / "results.csv"
            json_path = target / "results.json"
            emit_results(results, "csv", csv_path)
            emit_results(results, "json", json_path)
            echo_path = target / "manifest_echo.json"
            with open(echo_path, "w", encoding="utf-8") as fh:
                json.dump(
                    {"manifest": manifest.to_dict(), "version": version_string()},
                    fh,
                    indent=1,
                    sort_keys=True,
                )
                fh.write("\n")
            files = {
                "csv": str(csv_path),
                "json": str(json_path),
                "manifest_echo": str(echo_path),
            }
        return results, files
