"""Pydantic request/response models for the HTTP service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class DegreeSummary(BaseModel):
    min: int
    median: int
    max: int


class StatsResponse(BaseModel):
    entities: int
    relations: int
    triples: int
    degree: DegreeSummary
    histogram: list[list[int]]


class IngestRequest(BaseModel):
    kb_path: str | None = None


class RetrieveRequest(BaseModel):
    entities: list[str] = Field(min_length=1)
    n_hops: int | None = Field(default=None, ge=1)
    direction: str | None = None


class RetrieveResponse(BaseModel):
    hops: dict[str, list[str]]


class AskRequest(BaseModel):
    question: str
    entities: list[str] = Field(default_factory=list)
    variant: str = "KG_RAG"
    n_hops: int | None = Field(default=None, ge=1)
    top_k: int | None = Field(default=None, ge=1)
    direction: str | None = None
    seed: int | None = None


class ScoredCandidateModel(BaseModel):
    text: str
    score: float
    original_index: int


class TraceModel(BaseModel):
    index: int
    sub_question_original: str
    sub_question_effective: str
    selected: list[ScoredCandidateModel]
    sub_answer: str
    flags: list[str]


class DecompositionModel(BaseModel):
    chain_of_thought: str
    sub_questions: list[str]
    raw_output: str
    parse_failed: bool
    over_decomposed: bool


class AnswerRecordModel(BaseModel):
    question: str
    question_entities: list[str]
    variant: str
    params: dict
    decomposition: DecompositionModel | None
    traces: list[TraceModel]
    final_answer: str
    answer_line: str
    reasoning_chain: str
    candidate_pool_size: int
    flags: list[str]
    timings_ms: dict[str, float]
    error: str | None = None


class WarmCacheResponse(BaseModel):
    embedded: int
    total: int


class BenchRequest(BaseModel):
    manifest: dict | None = None
    manifest_path: str | None = None
    dry_run: bool = False
    results_dir: str | None = None


class BenchResponse(BaseModel):
    plan: list[dict]
    results: list[dict] | None = None
    files: dict[str, str] | None = None


class HealthResponse(BaseModel):
    status: str
    version: str
    graph_loaded: bool


class ConfigResponse(BaseModel):
    config: dict
