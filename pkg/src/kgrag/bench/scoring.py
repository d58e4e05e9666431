"""Hit@1 scoring with the shared answer normalization."""

from __future__ import annotations

import re

_WHITESPACE_RE = re.compile(r"\s+")


def normalize_answer(text: str) -> str:
    """Lowercase, trim, and collapse internal whitespace runs."""
    return _WHITESPACE_RE.sub(" ", text.strip()).lower()


def hit_at_1(generated_answer: str, gold: list[str], mode: str = "exact") -> int:
    """1 iff the generated answer matches any gold answer after normalization.

    Exact mode requires equality; contains mode accepts any normalized gold
    appearing as a substring of the normalized generation.
    """
    if not gold:
        raise ValueError("gold answers must be nonempty")
    generated_norm = normalize_answer(generated_answer)
    for answer in gold:
        answer_norm = normalize_answer(answer)
        if mode == "exact":
            if generated_norm == answer_norm:
                return 1
        elif mode == "contains":
            if answer_norm and answer_norm in generated_norm:
                return 1
        else:
            raise ValueError(f"unknown hit mode {mode!r}")
    return 0
