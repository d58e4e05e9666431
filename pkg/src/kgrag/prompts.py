"""Prompt templates stored as plain-text files with named placeholders.

Templates ship inside the package and are user-replaceable through the
config's template directory. Rendering substitutes only the known
placeholder names, so literal braces elsewhere in a template (for example
the "{answer of 1}" convention inside decomposition output) survive intact.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .errors import ConfigError

PLACEHOLDER_NAMES = (
    "question",
    "sub_question",
    "triples",
    "examples",
    "pairs",
    "next_question",
)

_PLACEHOLDER_RE = re.compile(r"\{(" + "|".join(PLACEHOLDER_NAMES) + r")\}")

TEMPLATE_FILES = {
    "decompose": "decompose.txt",
    "sub_answer": "sub_answer.txt",
    "sub_answer_empty": "sub_answer_empty.txt",
    "reformulate": "reformulate.txt",
    "synthesize": "synthesize.txt",
    "direct": "direct_answer.txt",
}

DEFAULT_ICL_FILE = "icl_metaqa.txt"


def render(template: str, **values: str) -> str:
    """Replace {name} placeholders with the provided values."""
    return _PLACEHOLDER_RE.sub(
        lambda m: str(values[m.group(1)]) if m.group(1) in values else m.group(0),
        template,
    )


@dataclass
class PromptLibrary:
    decompose: str
    sub_answer: str
    sub_answer_empty: str
    reformulate: str
    synthesize: str
    direct: str
    icl_examples: str

    @classmethod
    def default(cls) -> "PromptLibrary":
        base = resources.files("kgrag") / "templates"
        texts = {
            role: (base / filename).read_text(encoding="utf-8")
            for role, filename in TEMPLATE_FILES.items()
        }
        icl = (base / DEFAULT_ICL_FILE).read_text(encoding="utf-8")
        return cls(icl_examples=icl, **texts)

    @classmethod
    def from_dir(cls, template_dir=None, icl_path=None) -> "PromptLibrary":
        """Load templates from a directory, falling back to packaged defaults."""
        lib = cls.default()
        if template_dir is not None:
            directory = Path(template_dir)
            missing = []
            texts = {}
            for role, filename in TEMPLATE_FILES.items():
                path = directory / filename
                if path.is_file():
                    texts[role] = path.read_text(encoding="utf-8")
                else:
                    missing.append(str(path))
            if missing:
                raise ConfigError(
                    "template directory is missing files", problems=missing
                )
            lib = cls(icl_examples=lib.icl_examples, **texts)
            default_icl = directory / DEFAULT_ICL_FILE
            if default_icl.is_file():
                lib.icl_examples = default_icl.read_text(encoding="utf-8")
        if icl_path is not None:
            lib.icl_examples = Path(icl_path).read_text(encoding="utf-8")
        return lib
