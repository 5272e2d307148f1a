"""Pipeline configuration: defaults, flat key=value config files, validation."""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any


class ConfigError(ValueError):
    pass


@dataclass
class PipelineConfig:
    k1: int = 10
    k2: int = 20
    alpha: float = 0.2
    epsilon: float = 1e-5
    theta: float = 0.6
    beta: float = 0.7
    min_support_fraction: float = 0.01
    max_subset_len: int = 3
    k_type: int = 3
    seed: int = 42
    embed_url: str | None = None
    llm_endpoint: str | None = None
    llm_model: str | None = None

    def validate(self) -> "PipelineConfig":
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.epsilon <= 0.0:
            raise ConfigError(f"epsilon must be > 0, got {self.epsilon}")
        if not 0.0 <= self.theta <= 1.0:
            raise ConfigError(f"theta must be in [0, 1], got {self.theta}")
        if not 0.0 < self.beta < 1.0:
            raise ConfigError(f"beta must be in (0, 1), got {self.beta}")
        if not 0.0 < self.min_support_fraction <= 1.0:
            raise ConfigError(
                f"min_support_fraction must be in (0, 1], got {self.min_support_fraction}"
            )
        if self.max_subset_len < 1:
            raise ConfigError(f"max_subset_len must be >= 1, got {self.max_subset_len}")
        if self.k_type < 1:
            raise ConfigError(f"k_type must be >= 1, got {self.k_type}")
        if self.k1 < 1 or self.k2 < 1:
            raise ConfigError("k1 and k2 must be >= 1")
        return self

    @classmethod
    def field_types(cls) -> dict[str, type]:
        mapping: dict[str, type] = {}
        for f in fields(cls):
            if f.name in ("embed_url", "llm_endpoint", "llm_model"):
                mapping[f.name] = str
            elif f.type in ("int", int):
                mapping[f.name] = int
            else:
                mapping[f.name] = float
        return mapping

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineConfig":
        """Parse a flat ``key = value`` file; ``#`` starts a comment line."""
        values = parse_config_file(path)
        return cls(**values).validate()

    def merged(self, overrides: dict[str, Any]) -> "PipelineConfig":
        """New config with non-None overrides applied (flag beats file beats default)."""
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        for key, value in overrides.items():
            if value is not None:
                data[key] = value
        return PipelineConfig(**data).validate()


def parse_config_file(path: str | Path) -> dict[str, Any]:
    types = PipelineConfig.field_types()
    values: dict[str, Any] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}: line {lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in types:
            raise ConfigError(f"{path}: line {lineno}: unknown option {key!r}")
        try:
            values[key] = types[key](value)
        except ValueError as exc:
            raise ConfigError(f"{path}: line {lineno}: {exc}") from exc
    return values
