"""Compact, immutable, doubly-indexed knowledge graph built from a triple file.

Entities and relations are interned to dense integer ids in first-appearance
order. Every triple is reachable through both an outgoing index (by subject)
and an incoming index (by object), which is what makes bidirectional
breadth-first retrieval cheap.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .errors import EntityNotFound, MalformedLine

logger = logging.getLogger(__name__)

DEFAULT_DELIMITER = "|"


@dataclass(frozen=True)
class Triple:
    subject: int
    relation: int
    object: int


@dataclass
class KnowledgeGraph:
    """Immutable after build; safe to share across threads without locks."""

    entities: list[str]
    relations: list[str]
    triples: list[Triple]
    out_index: list[list[int]]   # entity id -> triple indexes where it is subject
    in_index: list[list[int]]    # entity id -> triple indexes where it is object
    name_lookup: dict[str, int]
    _trimmed_lookup: dict[str, int] = field(repr=False, default_factory=dict)

    @property
    def entity_count(self) -> int:
        return len(self.entities)

    @property
    def relation_count(self) -> int:
        return len(self.relations)

    @property
    def triple_count(self) -> int:
        return len(self.triples)


@dataclass
class DegreeStats:
    entity_count: int
    relation_count: int
    triple_count: int
    min_degree: int
    median_degree: int
    max_degree: int
    histogram: list[tuple[int, int]]  # (degree, count), ascending by degree

    def to_json_dict(self) -> dict:
        return {
            "entities": self.entity_count,
            "relations": self.relation_count,
            "triples": self.triple_count,
            "degree": {
                "min": self.min_degree,
                "median": self.median_degree,
                "max": self.max_degree,
            },
            "histogram": [[d, c] for d, c in self.histogram],
        }


def parse_triple_line(line: str, delimiter: str = DEFAULT_DELIMITER, row: int = 0):
    """Split one input row into (subject, relation, object), verbatim.

    No case folding and no underscore replacement happen here; verbalization
    is a retrieval-time concern.
    """
    stripped = line.rstrip("\r\n")
    fields = stripped.split(delimiter)
    if len(fields) != 3:
        raise MalformedLine(row, f"expected 3 fields, got {len(fields)}")
    if any(f == "" for f in fields):
        raise MalformedLine(row, "empty field")
    return fields[0], fields[1], fields[2]


def iter_triple_file(
    lines: Iterable[str],
    delimiter: str = DEFAULT_DELIMITER,
    skip_blank: bool = True,
) -> Iterator[tuple[str, str, str]]:
    """Yield raw triples from text lines, 1-based row numbers in errors."""
    for row, line in enumerate(lines, start=1):
        if skip_blank and line.strip() == "":
            continue
        yield parse_triple_line(line, delimiter, row)


def build_graph(raw_triples: Iterable[tuple[str, str, str]]) -> KnowledgeGraph:
    """Intern entities/relations and index triples.

    Duplicate (s, r, o) rows are dropped, first occurrence kept.
    """
    entities: list[str] = []
    relations: list[str] = []
    triples: list[Triple] = []
    name_lookup: dict[str, int] = {}
    relation_lookup: dict[str, int] = {}
    out_index: list[list[int]] = []
    in_index: list[list[int]] = []
    seen: set[tuple[int, int, int]] = set()

    def intern_entity(name: str) -> int:
        eid = name_lookup.get(name)
        if eid is None:
            eid = len(entities)
            entities.append(name)
            name_lookup[name] = eid
            out_index.append([])
            in_index.append([])
        return eid

    def intern_relation(name: str) -> int:
        rid = relation_lookup.get(name)
        if rid is None:
            rid = len(relations)
            relations.append(name)
            relation_lookup[name] = rid
        return rid

    dropped = 0
    for s, r, o in raw_triples:
        sid = intern_entity(s)
        rid = intern_relation(r)
        oid = intern_entity(o)
        key = (sid, rid, oid)
        if key in seen:
            dropped += 1
            continue
        seen.add(key)
        idx = len(triples)
        triples.append(Triple(sid, rid, oid))
        out_index[sid].append(idx)
        in_index[oid].append(idx)
    if dropped:
        logger.debug("dropped %d duplicate triples", dropped)

    trimmed: dict[str, int] = {}
    for name, eid in name_lookup.items():
        trimmed.setdefault(name.strip(), eid)

    return KnowledgeGraph(
        entities=entities,
        relations=relations,
        triples=triples,
        out_index=out_index,
        in_index=in_index,
        name_lookup=name_lookup,
        _trimmed_lookup=trimmed,
    )


def load_graph(
    path,
    delimiter: str = DEFAULT_DELIMITER,
    skip_blank: bool = True,
) -> KnowledgeGraph:
    with open(path, encoding="utf-8") as fh:
        return build_graph(iter_triple_file(fh, delimiter, skip_blank))


def resolve_entity(graph: KnowledgeGraph, name: str) -> int:
    """Exact-string match first, then a whitespace-trimmed retry."""
    eid = graph.name_lookup.get(name)
    if eid is not None:
        return eid
    eid = graph._trimmed_lookup.get(name.strip())
    if eid is not None:
        return eid
    raise EntityNotFound(name)


def degree_stats(graph: KnowledgeGraph) -> DegreeStats:
    """Degree = out-degree + in-degree; lower median for even entity counts."""
    degrees = [
        len(graph.out_index[eid]) + len(graph.in_index[eid])
        for eid in range(graph.entity_count)
    ]
    if degrees:
        ordered = sorted(degrees)
        min_d = ordered[0]
        max_d = ordered[-1]
        median_d = ordered[(len(ordered) - 1) // 2]
    else:
        min_d = median_d = max_d = 0
    histogram: dict[int, int] = {}
    for d in degrees:
        histogram[d] = histogram.get(d, 0) + 1
    return DegreeStats(
        entity_count=graph.entity_count,
        relation_count=graph.relation_count,
        triple_count=graph.triple_count,
        min_degree=min_d,
        median_degree=median_d,
        max_degree=max_d,
        histogram=sorted(histogram.items()),
    )
