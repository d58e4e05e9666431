"""Training-free knowledge-graph question answering.

Core flow: decompose a multi-hop question, retrieve candidate triples by
breadth-first search around the question entities, select the top-K triples
by embedding similarity per sub-question, and synthesize an explained
answer. A benchmark harness reproduces seeded sampling, Hit@1 scoring, and
parameter-grid evaluation; a FastAPI service and CLI expose the engine.
"""

from .kg_store import KnowledgeGraph, Triple, build_graph, degree_stats, load_graph, resolve_entity
from .pipeline import AnswerRecord, PipelineContext, PipelineParams, Variant, answer_question
from .retrieval import Direction, HopBuckets, flatten_candidates, retrieve_candidates, verbalize_triple

__version__ = "0.1.0"

__all__ = [
    "KnowledgeGraph",
    "Triple",
    "build_graph",
    "degree_stats",
    "load_graph",
    "resolve_entity",
    "AnswerRecord",
    "PipelineContext",
    "PipelineParams",
    "Variant",
    "answer_question",
    "Direction",
    "HopBuckets",
    "flatten_candidates",
    "retrieve_candidates",
    "verbalize_triple",
    "__version__",
]
