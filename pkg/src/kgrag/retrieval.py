"""Breadth-first candidate triple retrieval around question entities.

Triples are bucketed by the hop at which they first become incident to the
BFS frontier, so each triple appears exactly once across all buckets. No
truncation is applied; very-high-degree seeds produce large candidate sets.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .kg_store import KnowledgeGraph, Triple


class Direction(str, Enum):
    OUTGOING = "outgoing"
    BIDIRECTIONAL = "bidirectional"


@dataclass
class HopBuckets:
    buckets: list[list[Triple]]   # bucket h-1 holds triples first reached at hop h
    seed_entities: list[int]
    n_hops: int

    def triple_count(self) -> int:
        return sum(len(b) for b in self.buckets)


@dataclass(frozen=True)
class VerbalizedTriple:
    text: str
    source: Triple


def retrieve_candidates(
    graph: KnowledgeGraph,
    seeds: Sequence[int],
    n_hops: int,
    direction: Direction = Direction.BIDIRECTIONAL,
) -> HopBuckets:
    """Joint BFS from all seeds; triples assigned to their minimal hop.

    Bucket h collects the not-yet-emitted triples incident to the hop-(h-1)
    frontier: with OUTGOING only triples whose subject is on the frontier,
    with BIDIRECTIONAL triples touching the frontier from either side.
    Ordering is deterministic: frontier order, then triple-index order
    (outgoing index before incoming).
    """
    if not seeds:
        raise ValueError("seeds must be nonempty")
    visited: set[int] = set()
    frontier: list[int] = []
    for eid in seeds:
        if not 0 <= eid < graph.entity_count:
            raise ValueError(f"invalid entity id {eid}")
        if eid not in visited:
            visited.add(eid)
            frontier.append(eid)

    emitted: set[int] = set()
    buckets: list[list[Triple]] = []
    for _ in range(n_hops):
        bucket_idx: list[int] = []
        for eid in frontier:
            incident = graph.out_index[eid]
            if direction is Direction.BIDIRECTIONAL:
                incident = incident + graph.in_index[eid]
            for t_idx in incident:
                if t_idx not in emitted:
                    emitted.add(t_idx)
                    bucket_idx.append(t_idx)
        next_frontier: list[int] = []
        bucket: list[Triple] = []
        for t_idx in bucket_idx:
            triple = graph.triples[t_idx]
            bucket.append(triple)
            for endpoint in (triple.subject, triple.object):
                if endpoint not in visited:
                    visited.add(endpoint)
                    next_frontier.append(endpoint)
        buckets.append(bucket)
        frontier = next_frontier
    return HopBuckets(buckets=buckets, seed_entities=list(seeds), n_hops=n_hops)


def verbalize_triple(graph: KnowledgeGraph, triple: Triple) -> VerbalizedTriple:
    """Render "(subject, relation, object)" with relation underscores as spaces.

    Entity strings are left untouched; only the relation is rewritten.
    """
    subject = graph.entities[triple.subject]
    relation = graph.relations[triple.relation].replace("_", " ")
    obj = graph.entities[triple.object]
    return VerbalizedTriple(text=f"({subject}, {relation}, {obj})", source=triple)


def flatten_candidates(
    buckets: HopBuckets, graph: KnowledgeGraph
) -> list[VerbalizedTriple]:
    """Concatenate buckets 1..N in order; duplicates cannot occur."""
    out: list[VerbalizedTriple] = []
    for bucket in buckets.buckets:
        for triple in bucket:
            out.append(verbalize_triple(graph, triple))
    return out
