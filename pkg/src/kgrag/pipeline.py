"""Four-stage question answering over a knowledge graph, plus baselines.

The full flow (variant KG_RAG) decomposes the question, retrieves candidate
triples around the question entities, then answers each sub-question against
the top-K most similar triples, reformulating later sub-questions with
earlier answers, and finally synthesizes an explained answer. The baseline
variants reuse the same stages: LLM answers zero-shot, LLM_QD adds
decomposition without retrieval, LLM_KG retrieves once and answers the whole
question in a single generation.
"""

from __future__ import annotations

import logging
import re
import time
from dataclasses import dataclass, field
from enum import Enum

from .embedding import EmbeddingBackend, EmbeddingCache, ScoredCandidate, embed_texts, top_k
from .errors import BackendError
from .kg_store import KnowledgeGraph, resolve_entity
from .llm_gateway import (
    DEFAULT_PROFILES,
    CompletionBackend,
    SamplingProfile,
)
from .prompts import PromptLibrary, render
from .retrieval import Direction, flatten_candidates, retrieve_candidates

logger = logging.getLogger(__name__)

MAX_SUB_QUESTIONS = 5


class Variant(str, Enum):
    LLM = "LLM"
    LLM_QD = "LLM_QD"
    LLM_KG = "LLM_KG"
    KG_RAG = "KG_RAG"

    @property
    def uses_retrieval(self) -> bool:
        return self in (Variant.LLM_KG, Variant.KG_RAG)

    @property
    def uses_decomposition(self) -> bool:
        return self in (Variant.LLM_QD, Variant.KG_RAG)


@dataclass
class Decomposition:
    chain_of_thought: str
    sub_questions: list[str]
    raw_output: str
    parse_failed: bool = False
    over_decomposed: bool = False

    def to_dict(self) -> dict:
        return {
            "chain_of_thought": self.chain_of_thought,
            "sub_questions": list(self.sub_questions),
            "raw_output": self.raw_output,
            "parse_failed": self.parse_failed,
            "over_decomposed": self.over_decomposed,
        }


@dataclass
class SubQATrace:
    index: int
    sub_question_original: str
    sub_question_effective: str
    selected: list[ScoredCandidate]
    sub_answer: str
    flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "sub_question_original": self.sub_question_original,
            "sub_question_effective": self.sub_question_effective,
            "selected": [
                {"text": c.text, "score": c.score, "original_index": c.original_index}
                for c in self.selected
            ],
            "sub_answer": self.sub_answer,
            "flags": list(self.flags),
        }


@dataclass
class PipelineParams:
    n_hops: int = 3
    top_k: int = 30
    direction: Direction = Direction.BIDIRECTIONAL
    seed: int = 0
    similarity: str = "dot"
    max_sub_questions: int = MAX_SUB_QUESTIONS

    def to_dict(self) -> dict:
        return {
            "n_hops": self.n_hops,
            "top_k": self.top_k,
            "direction": self.direction.value,
            "seed": self.seed,
        }


@dataclass
class AnswerRecord:
    question: str
    question_entities: list[str]
    variant: str
    params: dict
    decomposition: Decomposition | None
    traces: list[SubQATrace]
    final_answer: str
    answer_line: str
    reasoning_chain: str
    candidate_pool_size: int
    flags: list[str]
    timings_ms: dict[str, float]
    error: str | None = None

    def to_dict(self, include_timings: bool = True) -> dict:
        out = {
            "question": self.question,
            "question_entities": list(self.question_entities),
            "variant": self.variant,
            "params": dict(self.params),
            "decomposition": self.decomposition.to_dict() if self.decomposition else None,
            "traces": [t.to_dict() for t in self.traces],
            "final_answer": self.final_answer,
            "answer_line": self.answer_line,
            "reasoning_chain": self.reasoning_chain,
            "candidate_pool_size": self.candidate_pool_size,
            "flags": list(self.flags),
            "error": self.error,
        }
        if include_timings:
            out["timings_ms"] = dict(self.timings_ms)
        return out


@dataclass
class PipelineContext:
    """Everything answer_question needs; all members are share-safe."""

    graph: KnowledgeGraph | None
    llm: CompletionBackend
    embedder: EmbeddingBackend
    cache: EmbeddingCache | None
    prompts: PromptLibrary
    profiles: dict[str, SamplingProfile] = field(
        default_factory=lambda: dict(DEFAULT_PROFILES)
    )


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------

_SUBQ_BLOCK_RE = re.compile(r"Sub-questions:\s*\n(.*)", re.DOTALL)
_NUMBERED_LINE_RE = re.compile(r"^\s*\d+[.)]\s*(.+?)\s*$", re.MULTILINE)
_REASONING_RE = re.compile(
    r"Reasoning:\s*(.*?)(?=\n\s*(?:Sub-questions:|No decomposition needed)|\Z)",
    re.DOTALL,
)
_ANSWER_LINE_RE = re.compile(r"^\s*Answer:\s*(.*?)\s*$", re.MULTILINE)


def parse_decomposition(
    raw: str, question: str, max_sub_questions: int = MAX_SUB_QUESTIONS
) -> Decomposition:
    """Parse "Reasoning:" and the numbered "Sub-questions:" block.

    A declared "No decomposition needed." and unparseable output both fall
    back to the original question; only the latter is flagged as a parse
    failure. More than max_sub_questions items keeps the first ones and
    flags over-decomposition.
    """
    reasoning_match = _REASONING_RE.search(raw)
    chain = reasoning_match.group(1).strip() if reasoning_match else ""
    block = _SUBQ_BLOCK_RE.search(raw)
    subs = _NUMBERED_LINE_RE.findall(block.group(1)) if block else []
    if subs:
        over = len(subs) > max_sub_questions
        if over:
            logger.debug("over-decomposition: %d sub-questions", len(subs))
            subs = subs[:max_sub_questions]
        return Decomposition(chain, subs, raw, over_decomposed=over)
    if "No decomposition needed" in raw:
        return Decomposition(chain, [question], raw)
    return Decomposition("", [question], raw, parse_failed=True)


def decompose(
    llm: CompletionBackend,
    question: str,
    icl_examples: str,
    prompts: PromptLibrary,
    profile: SamplingProfile,
    seed: int = 0,
    max_sub_questions: int = MAX_SUB_QUESTIONS,
) -> Decomposition:
    prompt = render(prompts.decompose, examples=icl_examples, question=question)
    response = llm.complete(profile.request(prompt, seed))
    return parse_decomposition(response.text, question, max_sub_questions)


def numbered_lines(items) -> str:
    return "\n".join(f"{i}. {item}" for i, item in enumerate(items, start=1))


def numbered_pairs(pairs) -> str:
    return "\n".join(
        f"{i}. Q: {q} A: {a}" for i, (q, a) in enumerate(pairs, start=1)
    )


def answer_sub_question(
    llm: CompletionBackend,
    sub_question: str,
    selected: list[ScoredCandidate],
    prompts: PromptLibrary,
    profile: SamplingProfile,
    seed: int = 0,
) -> str:
    """Zero-shot answer over the selected triples; empty selection switches to
    the explicit no-facts prompt."""
    if selected:
        prompt = render(
            prompts.sub_answer,
            triples=numbered_lines(c.text for c in selected),
            sub_question=sub_question,
        )
    else:
        prompt = render(prompts.sub_answer_empty, sub_question=sub_question)
    response = llm.complete(profile.request(prompt, seed))
    return response.text.strip()


def reformulate(
    llm: CompletionBackend,
    next_sub_question: str,
    prior_pairs: list[tuple[str, str]],
    prompts: PromptLibrary,
    profile: SamplingProfile,
    seed: int = 0,
) -> tuple[str, bool]:
    """Rewrite a sub-question using all prior (question, answer) pairs.

    Generation stops at "?", so a single "?" is appended back. An empty
    generation returns the question unchanged; the second return value
    reports that fallback.
    """
    if not prior_pairs:
        raise ValueError("prior_pairs must be nonempty")
    prompt = render(
        prompts.reformulate,
        pairs=numbered_pairs(prior_pairs),
        next_question=next_sub_question,
    )
    response = llm.complete(profile.request(prompt, seed))
    text = response.text.strip()
    if not text:
        return next_sub_question, True
    return text + "?", False


def extract_answer_line(text: str) -> tuple[str, bool]:
    """Last "Answer:" line of a generation, or the full text if absent."""
    matches = _ANSWER_LINE_RE.findall(text)
    if matches:
        return matches[-1].strip(), True
    return text.strip(), False


def synthesize(
    llm: CompletionBackend,
    question: str,
    chain_of_thought: str,
    traces: list[SubQATrace],
    prompts: PromptLibrary,
    profile: SamplingProfile,
    seed: int = 0,
) -> tuple[str, str, str, list[str]]:
    """Final answer from all sub-question/sub-answer pairs.

    Returns (synthesis text, extracted answer line, reasoning chain, flags).
    The reasoning chain is the decomposition chain-of-thought joined with a
    summary of the trace, so both explanations are preserved.
    """
    if not traces:
        raise ValueError("traces must be nonempty")
    pairs = [(t.sub_question_effective, t.sub_answer) for t in traces]
    prompt = render(
        prompts.synthesize, question=question, pairs=numbered_pairs(pairs)
    )
    response = llm.complete(profile.request(prompt, seed))
    text = response.text.strip()
    answer_line, found = extract_answer_line(text)
    flags = [] if found else ["no_answer_line"]
    summary = numbered_pairs(pairs)
    reasoning = (chain_of_thought + "\n" + summary).strip() if chain_of_thought else summary
    return text, answer_line, reasoning, flags


# ---------------------------------------------------------------------------
# End-to-end orchestration
# ---------------------------------------------------------------------------


class _StageClock:
    def __init__(self):
        self.timings: dict[str, float] = {}

    def add(self, stage: str, start: float):
        self.timings[stage] = self.timings.get(stage, 0.0) + (
            (time.perf_counter() - start) * 1000.0
        )


def answer_question(
    ctx: PipelineContext,
    question: str,
    entities: list[str],
    variant: Variant | str = Variant.KG_RAG,
    params: PipelineParams | None = None,
) -> AnswerRecord:
    """Answer one question under the given variant, returning the full trace.

    EntityNotFound propagates (the caller chose a KG variant with unknown
    entities); backend failures are captured in an error record so batch
    evaluation can carry on.
    """
    variant = Variant(variant)
    params = params or PipelineParams()
    clock = _StageClock()

    seeds: list[int] = []
    if variant.uses_retrieval:
        if ctx.graph is None:
            raise ValueError("variant requires a knowledge graph")
        seeds = [resolve_entity(ctx.graph, name) for name in entities]

    try:
        return _answer_question_inner(ctx, question, entities, variant, params, seeds, clock)
    except BackendError as exc:
        logger.warning("backend error while answering %r: %s", question, exc)
        return AnswerRecord(
            question=question,
            question_entities=list(entities),
            variant=variant.value,
            params=params.to_dict(),
            decomposition=None,
            traces=[],
            final_answer="",
            answer_line="",
            reasoning_chain="",
            candidate_pool_size=0,
            flags=["backend_error"],
            timings_ms=clock.timings,
            error=f"{type(exc).__name__}: {exc}",
        )


def _answer_question_inner(
    ctx: PipelineContext,
    question: str,
    entities: list[str],
    variant: Variant,
    params: PipelineParams,
    seeds: list[int],
    clock: _StageClock,
) -> AnswerRecord:
    profiles = ctx.profiles
    flags: list[str] = []

    decomposition: Decomposition | None = None
    if variant.uses_decomposition:
        start = time.perf_counter()
        decomposition = decompose(
            ctx.llm,
            question,
            ctx.prompts.icl_examples,
            ctx.prompts,
            profiles["decompose"],
            params.seed,
            params.max_sub_questions,
        )
        clock.add("decompose", start)
        if decomposition.parse_failed:
            flags.append("decomposition_parse_failed")
        if decomposition.over_decomposed:
            flags.append("over_decomposition")

    pool_texts: list[str] = []
    pool_vectors = None
    if variant.uses_retrieval:
        start = time.perf_counter()
        buckets = retrieve_candidates(ctx.graph, seeds, params.n_hops, params.direction)
        pool_texts = [v.text for v in flatten_candidates(buckets, ctx.graph)]
        clock.add("retrieve", start)
        if pool_texts:
            start = time.perf_counter()
            pool_vectors = embed_texts(ctx.embedder, ctx.cache, pool_texts)
            clock.add("embed", start)
        else:
            flags.append("retrieval_empty")

    def select(query_text: str) -> list[ScoredCandidate]:
        if not pool_texts:
            return []
        start = time.perf_counter()
        query_vec = embed_texts(ctx.embedder, ctx.cache, [query_text])[0]
        chosen = top_k(
            query_vec,
            list(zip(pool_texts, pool_vectors)),
            params.top_k,
            params.similarity,
        )
        clock.add("select", start)
        return chosen

    traces: list[SubQATrace] = []

    if variant is Variant.LLM:
        start = time.perf_counter()
        prompt = render(ctx.prompts.direct, question=question)
        response = ctx.llm.complete(profiles["direct"].request(prompt, params.seed))
        clock.add("answer", start)
        text = response.text.strip()
        answer_line, _ = extract_answer_line(text)
        traces.append(
            SubQATrace(0, question, question, [], text)
        )
        return AnswerRecord(
            question=question,
            question_entities=list(entities),
            variant=variant.value,
            params=params.to_dict(),
            decomposition=None,
            traces=traces,
            final_answer=text,
            answer_line=answer_line,
            reasoning_chain="",
            candidate_pool_size=0,
            flags=flags,
            timings_ms=clock.timings,
        )

    if variant is Variant.LLM_KG:
        selected = select(question)
        trace_flags = [] if selected else ["context_empty"]
        start = time.perf_counter()
        text = answer_sub_question(
            ctx.llm, question, selected, ctx.prompts, profiles["sub_answer"], params.seed
        )
        clock.add("answer", start)
        answer_line, _ = extract_answer_line(text)
        traces.append(SubQATrace(0, question, question, selected, text, trace_flags))
        return AnswerRecord(
            question=question,
            question_entities=list(entities),
            variant=variant.value,
            params=params.to_dict(),
            decomposition=None,
            traces=traces,
            final_answer=text,
            answer_line=answer_line,
            reasoning_chain="",
            candidate_pool_size=len(pool_texts),
            flags=flags,
            timings_ms=clock.timings,
        )

    # LLM_QD and KG_RAG iterate over sub-questions.
    assert decomposition is not None
    prior_pairs: list[tuple[str, str]] = []
    for i, sub_q in enumerate(decomposition.sub_questions):
        trace_flags: list[str] = []
        effective = sub_q
        if i > 0:
            start = time.perf_counter()
            effective, fell_back = reformulate(
                ctx.llm, sub_q, prior_pairs, ctx.prompts, profiles["reformulate"], params.seed
            )
            clock.add("reformulate", start)
            if fell_back:
                trace_flags.append("reformulation_empty")
        if variant is Variant.KG_RAG:
            selected = select(effective)
            if not selected:
                trace_flags.append("context_empty")
            start = time.perf_counter()
            sub_answer = answer_sub_question(
                ctx.llm, effective, selected, ctx.prompts, profiles["sub_answer"], params.seed
            )
            clock.add("answer", start)
        else:
            selected = []
            trace_flags.append("zero_shot")
            start = time.perf_counter()
            prompt = render(ctx.prompts.direct, question=effective)
            response = ctx.llm.complete(profiles["direct"].request(prompt, params.seed))
            clock.add("answer", start)
            sub_answer = response.text.strip()
        traces.append(SubQATrace(i, sub_q, effective, selected, sub_answer, trace_flags))
        prior_pairs.append((effective, sub_answer))

    start = time.perf_counter()
    text, answer_line, reasoning, synth_flags = synthesize(
        ctx.llm,
        question,
        decomposition.chain_of_thought,
        traces,
        ctx.prompts,
        profiles["synthesize"],
        params.seed,
    )
    clock.add("synthesize", start)
    flags.extend(synth_flags)

    return AnswerRecord(
        question=question,
        question_entities=list(entities),
        variant=variant.value,
        params=params.to_dict(),
        decomposition=decomposition,
        traces=traces,
        final_answer=text,
        answer_line=answer_line,
        reasoning_chain=reasoning,
        candidate_pool_size=len(pool_texts),
        flags=flags,
        timings_ms=clock.timings,
    )
