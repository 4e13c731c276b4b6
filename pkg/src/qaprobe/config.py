"""Run configuration: one YAML/JSON file describing a whole run.

Secrets never live in the file; it names the environment variable that
holds the API key, and the snapshot embedded in reports carries only
that name.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigError


@dataclass
class CorpusSpec:
    dataset: str = "custom"
    path: str = ""
    sample_n: int | None = None
    seed: int = 0


@dataclass
class ProviderSpec:
    chat_provider: str = "mock"  # mock | http
    chat_base_url: str = ""
    chat_model: str = "mock-chat"
    judge_model: str = ""  # defaults to chat_model
    api_key_env: str = "QAPROBE_API_KEY"
    embedding_provider: str = "hashing"  # hashing | http | sentence-transformer
    embedding_base_url: str = ""
    embedding_model: str = "hashing-ngram-v1"
    embedding_dimension: int = 256
    max_output: int = 1024
    generation_temperature: float = 0.7
    reask_temperature: float = 0.0
    extraction_temperature: float = 0.0
    max_retries: int = 3
    rate_per_s: float = 0.0
    max_in_flight: int = 8

    def api_key(self) -> str | None:
        return os.environ.get(self.api_key_env)


@dataclass
class SyntaxSpec:
    backend: str = "stanza"  # stanza | http | static
    fixture_path: str = ""
    url: str = ""
    lang: str = "en"


@dataclass
class SutSpec:
    kind: str = "mock"  # mock | http | subprocess
    url: str = ""
    cmd: list[str] = field(default_factory=list)
    script_path: str = ""
    identity: str = ""
    timeout_s: float = 30.0


@dataclass
class Thresholds:
    consistency: float = 0.75
    oracle_stage1: float = 0.75
    judge: int = 50


@dataclass
class RunConfig:
    corpus: CorpusSpec = field(default_factory=CorpusSpec)
    provider: ProviderSpec = field(default_factory=ProviderSpec)
    syntax: SyntaxSpec = field(default_factory=SyntaxSpec)
    sut: SutSpec = field(default_factory=SutSpec)
    thresholds: Thresholds = field(default_factory=Thresholds)
    reask_k: int = 5
    entity_question_count: int = 5
    relation_question_count: int = 10
    lexical_deny_extra: list[str] = field(default_factory=list)
    lexical_deny_override: list[str] | None = None
    workers: int = 1
    cache_dir: str = ".qaprobe-cache"
    output_dir: str = "qaprobe-out"

    def validate(self) -> "RunConfig":
        t = self.thresholds
        if not (0.0 <= t.consistency <= 1.0):
            raise ConfigError(f"consistency threshold {t.consistency} outside [0, 1]")
        if not (0.0 <= t.oracle_stage1 <= 1.0):
            raise ConfigError(f"stage-1 threshold {t.oracle_stage1} outside [0, 1]")
        if not (0 <= t.judge <= 100):
            raise ConfigError(f"judge threshold {t.judge} outside [0, 100]")
        if self.reask_k < 1:
            raise ConfigError("reask_k must be >= 1")
        if self.entity_question_count < 1 or self.relation_question_count < 1:
            raise ConfigError("question counts must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.corpus.sample_n is not None and self.corpus.sample_n < 0:
            raise ConfigError("sample_n must be >= 0")
        if self.corpus.dataset not in ("boolq", "squad2", "narrativeqa", "custom"):
            raise ConfigError(f"unknown dataset {self.corpus.dataset!r}")
        return self

    @property
    def judge_model(self) -> str:
        return self.provider.judge_model or self.provider.chat_model

    def deny_set(self):
        from .validation import build_deny_set

        if self.lexical_deny_override is None and not self.lexical_deny_extra:
            return None  # use the built-in deny-lists
        return build_deny_set(self.lexical_deny_extra, self.lexical_deny_override)

    def snapshot(self) -> dict:
        """Config as a plain dict for reports; contains no secret values."""
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        def build(section_cls, key):
            data = raw.get(key, {}) or {}
            known = {f for f in section_cls.__dataclass_fields__}
            unknown = set(data) - known
            if unknown:
                raise ConfigError(f"unknown keys in '{key}': {sorted(unknown)}")
            return section_cls(**data)

        known_top = {f for f in cls.__dataclass_fields__}
        sections = {"corpus", "provider", "syntax", "sut", "thresholds"}
        unknown = set(raw) - known_top
        if unknown:
            raise ConfigError(f"unknown top-level config keys: {sorted(unknown)}")
        scalars = {k: v for k, v in raw.items() if k not in sections}
        cfg = cls(
            corpus=build(CorpusSpec, "corpus"),
            provider=build(ProviderSpec, "provider"),
            syntax=build(SyntaxSpec, "syntax"),
            sut=build(SutSpec, "sut"),
            thresholds=build(Thresholds, "thresholds"),
            **scalars,
        )
        return cfg.validate()

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        text = path.read_text(encoding="utf-8")
        try:
            if path.suffix in (".yaml", ".yml"):
                raw = yaml.safe_load(text) or {}
            else:
                raw = json.loads(text)
        except (yaml.YAMLError, ValueError) as exc:
            raise ConfigError(f"config file unreadable: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config file must contain a mapping")
        return cls.from_dict(raw)
