"""Parameter-grid evaluation with per-cell resume.

A cell is one (dataset, variant, N, K) combination; inside a cell every seed
draws its own question sample and the per-seed Hit@1 scores are aggregated
into mean and population standard deviation. Finished cells are streamed to
disk, so an interrupted grid picks up where it stopped without re-running
any pipeline call.
"""

from __future__ import annotations

import csv
import json
import logging
import re
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from ..errors import ConfigError, KgragError
from ..pipeline import PipelineContext, PipelineParams, Variant, answer_question
from ..retrieval import Direction
from .data import QARecord
from .sampling import SamplePlan, sample
from .scoring import hit_at_1

logger = logging.getLogger(__name__)

_SAFE_NAME_RE = re.compile(r"[^A-Za-z0-9_-]+")


@dataclass(frozen=True)
class GridCell:
    dataset: str
    variant: str
    n_hops: int | None
    top_k: int | None

    def cell_id(self) -> str:
        n = "x" if self.n_hops is None else str(self.n_hops)
        k = "x" if self.top_k is None else str(self.top_k)
        dataset = _SAFE_NAME_RE.sub("-", self.dataset)
        return f"{dataset}__{self.variant}__N{n}__K{k}"


@dataclass
class RunManifest:
    name: str
    datasets: list[str]
    variants: list[str]
    n_hops: list[int]
    top_k: list[int]
    seeds: list[int]
    sample_size: int
    hit_mode: str = "exact"
    direction: str = Direction.BIDIRECTIONAL.value
    results_dir: str | None = None

    @classmethod
    def from_dict(cls, raw: dict) -> "RunManifest":
        problems = []
        known = {
            "name", "datasets", "variants", "n_hops", "top_k", "seeds",
            "sample_size", "hit_mode", "direction", "results_dir",
        }
        for key in raw:
            if key not in known:
                problems.append(f"unknown manifest key {key!r}")
        for key in ("datasets", "variants", "seeds", "sample_size"):
            if key not in raw:
                problems.append(f"missing manifest key {key!r}")
        variants = raw.get("variants", [])
        for v in variants:
            if v not in Variant.__members__:
                problems.append(
                    f"unknown variant {v!r}; expected one of "
                    f"{sorted(Variant.__members__)}"
                )
        if "datasets" in raw and not raw["datasets"]:
            problems.append("datasets must be a nonempty list")
        if "seeds" in raw and not raw["seeds"]:
            problems.append("seeds must be a nonempty list")
        sample_size = raw.get("sample_size", 0)
        if not isinstance(sample_size, int) or sample_size < 1:
            problems.append("sample_size must be a positive integer")
        n_hops = raw.get("n_hops", [3])
        top_k = raw.get("top_k", [30])
        for n in n_hops:
            if not isinstance(n, int) or n < 1:
                problems.append(f"n_hops value {n!r} must be a positive integer")
        for k in top_k:
            if not isinstance(k, int) or k < 1:
                problems.append(f"top_k value {k!r} must be a positive integer")
        hit_mode = raw.get("hit_mode", "exact")
        if hit_mode not in ("exact", "contains"):
            problems.append(f"hit_mode must be 'exact' or 'contains', got {hit_mode!r}")
        direction = raw.get("direction", Direction.BIDIRECTIONAL.value)
        if direction not in (d.value for d in Direction):
            problems.append(f"unknown direction {direction!r}")
        if problems:
            raise ConfigError("invalid run manifest", problems=problems)
        return cls(
            name=raw.get("name", "run"),
            datasets=list(raw["datasets"]),
            variants=list(variants),
            n_hops=list(n_hops),
            top_k=list(top_k),
            seeds=list(raw["seeds"]),
            sample_size=sample_size,
            hit_mode=hit_mode,
            direction=direction,
            results_dir=raw.get("results_dir"),
        )

    @classmethod
    def from_file(cls, path) -> "RunManifest":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "datasets": list(self.datasets),
            "variants": list(self.variants),
            "n_hops": list(self.n_hops),
            "top_k": list(self.top_k),
            "seeds": list(self.seeds),
            "sample_size": self.sample_size,
            "hit_mode": self.hit_mode,
            "direction": self.direction,
            "results_dir": self.results_dir,
        }

    def cells(self) -> list[GridCell]:
        """Grid cells in stable order; N and K collapse to None for variants
        that do not retrieve (they are recorded as null in the cell key)."""
        out: list[GridCell] = []
        seen: set[GridCell] = set()
        for dataset in self.datasets:
            for variant_name in self.variants:
                variant = Variant(variant_name)
                n_values = self.n_hops if variant.uses_retrieval else [None]
                k_values = self.top_k if variant.uses_retrieval else [None]
                for n in n_values:
                    for k in k_values:
                        cell = GridCell(dataset, variant_name, n, k)
                        if cell not in seen:
                            seen.add(cell)
                            out.append(cell)
        return out


@dataclass
class EvalResult:
    dataset: str
    variant: str
    n_hops: int | None
    top_k: int | None
    sample_size: int
    seeds: list[int]
    per_seed_hit1: list[float]
    mean_hit1: float
    std_hit1: float
    per_question: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "variant": self.variant,
            "n_hops": self.n_hops,
            "top_k": self.top_k,
            "sample_size": self.sample_size,
            "seeds": list(self.seeds),
            "per_seed_hit1": list(self.per_seed_hit1),
            "mean_hit1": self.mean_hit1,
            "std_hit1": self.std_hit1,
            "per_question": [dict(q) for q in self.per_question],
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "EvalResult":
        return cls(
            dataset=raw["dataset"],
            variant=raw["variant"],
            n_hops=raw["n_hops"],
            top_k=raw["top_k"],
            sample_size=raw["sample_size"],
            seeds=list(raw["seeds"]),
            per_seed_hit1=list(raw["per_seed_hit1"]),
            mean_hit1=raw["mean_hit1"],
            std_hit1=raw["std_hit1"],
            per_question=[dict(q) for q in raw.get("per_question", [])],
        )


def aggregate(per_seed: Sequence[float]) -> tuple[float, float]:
    """Mean and population standard deviation of the per-seed scores."""
    mean = statistics.fmean(per_seed)
    std = statistics.pstdev(per_seed) if len(per_seed) > 1 else 0.0
    return mean, std


def _evaluate_cell(
    ctx: PipelineContext,
    records: list[QARecord],
    cell: GridCell,
    manifest: RunManifest,
    concurrency: int = 1,
) -> EvalResult:
    per_seed: list[float] = []
    per_question: list[dict] = []
    direction = Direction(manifest.direction)
    for seed in manifest.seeds:
        chosen = sample(records, SamplePlan(manifest.sample_size, seed))
        params = PipelineParams(
            n_hops=cell.n_hops if cell.n_hops is not None else 3,
            top_k=cell.top_k if cell.top_k is not None else 30,
            direction=direction,
            seed=seed,
        )

        def answer_one(record: QARecord) -> dict:
            flags: list[str]
            try:
                answer = answer_question(
                    ctx,
                    record.question_text,
                    record.question_entities,
                    cell.variant,
                    params,
                )
                generated = answer.answer_line
                flags = list(answer.flags)
                if answer.error:
                    flags.append("error")
            except KgragError as exc:
                generated = ""
                flags = ["error", f"{type(exc).__name__}"]
            hit = hit_at_1(generated, record.gold_answers, manifest.hit_mode)
            return {
                "seed": seed,
                "question": record.question_text,
                "generated": generated,
                "hit": hit,
                "flags": flags,
            }

        if concurrency > 1:
            with ThreadPoolExecutor(max_workers=concurrency) as pool:
                rows = list(pool.map(answer_one, chosen))
        else:
            rows = [answer_one(record) for record in chosen]
        per_question.extend(rows)
        per_seed.append(sum(r["hit"] for r in rows) / len(rows))
    mean, std = aggregate(per_seed)
    return EvalResult(
        dataset=cell.dataset,
        variant=cell.variant,
        n_hops=cell.n_hops,
        top_k=cell.top_k,
        sample_size=manifest.sample_size,
        seeds=list(manifest.seeds),
        per_seed_hit1=per_seed,
        mean_hit1=mean,
        std_hit1=std,
        per_question=per_question,
    )


def run_grid(
    ctx: PipelineContext,
    datasets: dict[str, list[QARecord]],
    manifest: RunManifest,
    results_dir=None,
    concurrency: int = 1,
    progress: Callable[[GridCell, EvalResult, bool], None] | None = None,
) -> list[EvalResult]:
    """Evaluate every cell of the manifest, resuming from results_dir.

    Individual question failures score 0 with an error flag; they never
    abort the grid.
    """
    missing = [d for d in manifest.datasets if d not in datasets]
    if missing:
        raise ConfigError(
            "manifest references unknown datasets",
            problems=[f"no QA dataset named {d!r}" for d in missing],
        )
    for name, records in datasets.items():
        if name in manifest.datasets and manifest.sample_size > len(records):
            raise ConfigError(
                f"sample_size {manifest.sample_size} exceeds dataset "
                f"{name!r} ({len(records)} questions)"
            )
    cell_dir = None
    if results_dir is not None:
        cell_dir = Path(results_dir) / "cells"
        cell_dir.mkdir(parents=True, exist_ok=True)

    results: list[EvalResult] = []
    for cell in manifest.cells():
        cached = False
        result = None
        if cell_dir is not None:
            cell_path = cell_dir / f"{cell.cell_id()}.json"
            if cell_path.is_file():
                with open(cell_path, encoding="utf-8") as fh:
                    result = EvalResult.from_dict(json.load(fh))
                cached = True
        if result is None:
            result = _evaluate_cell(
                ctx, datasets[cell.dataset], cell, manifest, concurrency
            )
            if cell_dir is not None:
                cell_path = cell_dir / f"{cell.cell_id()}.json"
                tmp_path = cell_path.with_suffix(".tmp")
                with open(tmp_path, "w", encoding="utf-8") as fh:
                    json.dump(result.to_dict(), fh)
                tmp_path.replace(cell_path)
        results.append(result)
        if progress is not None:
            progress(cell, result, cached)
    return results


CSV_COLUMNS = (
    "dataset",
    "variant",
    "N",
    "K",
    "seed_count",
    "sample_size",
    "mean_hit1",
    "std_hit1",
)


def emit_results(results: Sequence[EvalResult], fmt: str, path) -> None:
    """Write aggregated results as CSV, or full records (per-question
    included) as JSON."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for r in results:
                writer.writerow(
                    [
                        r.dataset,
                        r.variant,
                        "" if r.n_hops is None else r.n_hops,
                        "" if r.top_k is None else r.top_k,
                        len(r.seeds),
                        r.sample_size,
                        repr(r.mean_hit1),
                        repr(r.std_hit1),
                    ]
                )
    elif fmt == "json":
        with open(path, "w", encoding="utf-8") as fh:
            json.dump([r.to_dict() for r in results], fh, indent=1, sort_keys=True)
            fh.write("\n")
    else:
        raise ValueError(f"unknown results format {fmt!r}")


def load_results(path) -> list[EvalResult]:
    with open(path, encoding="utf-8") as fh:
        return [EvalResult.from_dict(item) for item in json.load(fh)]
