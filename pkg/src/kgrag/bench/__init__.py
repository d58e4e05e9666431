"""Benchmark harness: MetaQA loading, seeded sampling, Hit@1, grid runs."""

from .data import QARecord, load_metaqa_qa
from .grid import EvalResult, RunManifest, emit_results, load_results, run_grid
from .sampling import SamplePlan, SplitMix64, sample, sample_indexes
from .scoring import hit_at_1, normalize_answer

__all__ = [
    "QARecord",
    "load_metaqa_qa",
    "EvalResult",
    "RunManifest",
    "emit_results",
    "load_results",
    "run_grid",
    "SamplePlan",
    "SplitMix64",
    "sample",
    "sample_indexes",
    "hit_at_1",
    "normalize_answer",
]
