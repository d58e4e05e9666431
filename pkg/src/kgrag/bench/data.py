"""MetaQA-style QA file loading.

Each line is "question<TAB>answer1|answer2|..."; question entities are
marked with square brackets, which are stripped from the question text.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from ..errors import MalformedQALine

_BRACKETED_RE = re.compile(r"\[([^\]]*)\]")


@dataclass
class QARecord:
    question_text: str
    question_entities: list[str]
    gold_answers: list[str]
    hop_label: int | None = None


def parse_qa_line(line: str, row: int = 0, hop_label: int | None = None) -> QARecord:
    stripped = line.rstrip("\r\n")
    if "\t" not in stripped:
        raise MalformedQALine(row, "missing tab separator")
    question_raw, answers_raw = stripped.split("\t", 1)
    entities = _BRACKETED_RE.findall(question_raw)
    if not entities:
        raise MalformedQALine(row, "no [entity] marker in question")
    if any(e.strip() == "" for e in entities):
        raise MalformedQALine(row, "empty [entity] marker")
    answers = answers_raw.split("|")
    if not answers_raw or any(a == "" for a in answers):
        raise MalformedQALine(row, "empty answer")
    question_text = _BRACKETED_RE.sub(r"\1", question_raw)
    return QARecord(
        question_text=question_text,
        question_entities=entities,
        gold_answers=answers,
        hop_label=hop_label,
    )


def load_metaqa_qa(path, hop_label: int | None = None) -> list[QARecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for row, line in enumerate(fh, start=1):
            if line.strip() == "":
                continue
            records.append(parse_qa_line(line, row, hop_label))
    return records
