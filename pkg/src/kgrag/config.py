"""Run configuration: a sectioned TOML file plus flag overrides.

Relative paths are resolved against the config file's directory, secrets
come only from environment variables named in the file, and validation
reports every problem at once.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import ConfigError
from .retrieval import Direction

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


@dataclass
class KgConfig:
    path: str | None = None
    delimiter: str = "|"
    skip_blank: bool = True


@dataclass
class LlmConfig:
    mode: str = "scripted"  # scripted | http
    endpoint: str = ""
    model: str = ""
    auth_env: str = ""
    timeout_s: float = 120.0
    unsupported_params: list[str] = field(default_factory=list)
    rules_path: str | None = None
    oracle_mode: bool = False
    default_response: str = ""


@dataclass
class EmbeddingConfig:
    mode: str = "hash"  # hash | http
    endpoint: str = ""
    model: str = ""
    auth_env: str = ""
    dim: int = 768
    cache_path: str | None = None
    similarity: str = "dot"  # dot | cosine


@dataclass
class PipelineConfig:
    n_hops: int = 3
    top_k: int = 30
    direction: str = Direction.BIDIRECTIONAL.value
    seed: int = 0
    template_dir: str | None = None
    icl_path: str | None = None
    max_sub_questions: int = 5


@dataclass
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8756


@dataclass
class LimitsConfig:
    llm_concurrency: int = 4
    embed_concurrency: int = 2


@dataclass
class RunConfig:
    kg: KgConfig = field(default_factory=KgConfig)
    qa_paths: dict[str, str] = field(default_factory=dict)
    llm: LlmConfig = field(default_factory=LlmConfig)
    embedding: EmbeddingConfig = field(default_factory=EmbeddingConfig)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    service: ServiceConfig = field(default_factory=ServiceConfig)
    limits: LimitsConfig = field(default_factory=LimitsConfig)
    profile_overrides: dict[str, dict] = field(default_factory=dict)
    source_path: str | None = None

    def to_echo_dict(self) -> dict:
        """Effective configuration for --json outputs; no secrets included."""
        return {
            "kg": vars(self.kg).copy(),
            "qa": dict(self.qa_paths),
            "llm": {k: v for k, v in vars(self.llm).items()},
            "embedding": vars(self.embedding).copy(),
            "pipeline": vars(self.pipeline).copy(),
            "service": vars(self.service).copy(),
            "limits": vars(self.limits).copy(),
            "profiles": {k: dict(v) for k, v in self.profile_overrides.items()},
            "source_path": self.source_path,
        }

    def apply_overrides(self, **kwargs) -> "RunConfig":
        """New config with CLI-style overrides; None values are ignored."""
        pipeline = self.pipeline
        updates = {}
        for name in ("n_hops", "top_k", "direction", "seed"):
            value = kwargs.pop(name, None)
            if value is not None:
                updates[name] = value
        if kwargs:
            raise ConfigError(f"unknown overrides: {sorted(kwargs)}")
        if not updates:
            return self
        return replace(self, pipeline=replace(pipeline, **updates))


_SECTION_FIELDS = {
    "kg": KgConfig,
    "llm": LlmConfig,
    "embedding": EmbeddingConfig,
    "pipeline": PipelineConfig,
    "service": ServiceConfig,
    "limits": LimitsConfig,
}


def _coerce_section(name: str, cls, raw: dict, problems: list[str]):
    known = {f for f in cls.__dataclass_fields__}
    values = {}
    for key, value in raw.items():
        if key not in known:
            problems.append(f"[{name}] unknown key {key!r}")
            continue
        values[key] = value
    try:
        return cls(**values)
    except TypeError as exc:
        problems.append(f"[{name}] {exc}")
        return cls()


def load_config(path=None, force: bool = False) -> RunConfig:
    """Parse and validate a config file; with no path, return defaults."""
    if path is None:
        return validate_config(RunConfig(), force=force)
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    with open(path, "rb") as fh:
        try:
            raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid TOML: {exc}") from exc

    problems: list[str] = []
    sections = {}
    for section, cls in _SECTION_FIELDS.items():
        sections[section] = _coerce_section(section, cls, raw.pop(section, {}), problems)
    qa_raw = raw.pop("qa", {})
    qa_paths = {}
    for key, value in qa_raw.items():
        if not isinstance(value, str):
            problems.append(f"[qa] {key} must be a path string")
        else:
            qa_paths[key] = value
    profiles_raw = raw.pop("profiles", {})
    if not isinstance(profiles_raw, dict):
        problems.append("[profiles] must be a table of role tables")
        profiles_raw = {}
    for key in raw:
        problems.append(f"unknown section [{key}]")
    if problems:
        raise ConfigError(f"invalid config {path}", problems=problems)

    config = RunConfig(
        kg=sections["kg"],
        qa_paths=qa_paths,
        llm=sections["llm"],
        embedding=sections["embedding"],
        pipeline=sections["pipeline"],
        service=sections["service"],
        limits=sections["limits"],
        profile_overrides={k: dict(v) for k, v in profiles_raw.items()},
        source_path=str(path),
    )
    _resolve_paths(config, path.parent)
    return validate_config(config, force=force)


def _resolve_paths(config: RunConfig, base: Path) -> None:
    def resolve(value):
        if not value:
            return value
        p = Path(value)
        return str(p) if p.is_absolute() else str((base / p).resolve())

    config.kg.path = resolve(config.kg.path)
    config.qa_paths = {k: resolve(v) for k, v in config.qa_paths.items()}
    config.llm.rules_path = resolve(config.llm.rules_path)
    config.embedding.cache_path = resolve(config.embedding.cache_path)
    config.pipeline.template_dir = resolve(config.pipeline.template_dir)
    config.pipeline.icl_path = resolve(config.pipeline.icl_path)


def validate_config(config: RunConfig, force: bool = False) -> RunConfig:
    problems: list[str] = []
    if config.kg.path and not Path(config.kg.path).is_file():
        problems.append(f"[kg] path does not exist: {config.kg.path}")
    if len(config.kg.delimiter) != 1:
        problems.append("[kg] delimiter must be a single character")
    for name, qa_path in config.qa_paths.items():
        if not Path(qa_path).is_file():
            problems.append(f"[qa] {name} does not exist: {qa_path}")
    if config.llm.mode not in ("scripted", "http"):
        problems.append(f"[llm] unknown mode {config.llm.mode!r}")
    if config.llm.mode == "http" and not config.llm.endpoint:
        problems.append("[llm] http mode requires an endpoint")
    if config.llm.rules_path and not Path(config.llm.rules_path).is_file():
        problems.append(f"[llm] rules_path does not exist: {config.llm.rules_path}")
    if config.embedding.mode not in ("hash", "http"):
        problems.append(f"[embedding] unknown mode {config.embedding.mode!r}")
    if config.embedding.mode == "http" and not config.embedding.endpoint:
        problems.append("[embedding] http mode requires an endpoint")
    if config.embedding.similarity not in ("dot", "cosine"):
        problems.append(
            f"[embedding] similarity must be 'dot' or 'cosine', "
            f"got {config.embedding.similarity!r}"
        )
    if config.pipeline.n_hops not in (1, 2, 3) and not force:
        problems.append(
            f"[pipeline] n_hops {config.pipeline.n_hops} outside 1..3 "
            "(pass force to override)"
        )
    if config.pipeline.top_k < 1:
        problems.append("[pipeline] top_k must be >= 1")
    if config.pipeline.direction not in (d.value for d in Direction):
        problems.append(f"[pipeline] unknown direction {config.pipeline.direction!r}")
    if config.pipeline.template_dir and not Path(config.pipeline.template_dir).is_dir():
        problems.append(
            f"[pipeline] template_dir does not exist: {config.pipeline.template_dir}"
        )
    if config.pipeline.icl_path and not Path(config.pipeline.icl_path).is_file():
        problems.append(f"[pipeline] icl_path does not exist: {config.pipeline.icl_path}")
    if config.limits.llm_concurrency < 1:
        problems.append("[limits] llm_concurrency must be >= 1")
    if problems:
        raise ConfigError("invalid configuration", problems=problems)
    return config
