"""Engine configuration.

Precedence, lowest to highest: built-in defaults, config file, environment
variables (KGQA_<KEY>), explicit overrides (CLI flags).
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass

from .kg import FREEBASE_ID_PATTERN, FREEBASE_LABEL_PROPERTY, FREEBASE_PREFIX

ENV_PREFIX = "KGQA_"


@dataclass
class EngineConfig:
    replan_limit: int = 2
    max_path_corrections: int = 3
    max_total_cycles: int = 40
    prune_threshold: int = 70
    parse_retries: int = 2
    context_chain_limit: int = 20
    kg_result_limit: int = 200
    expand_unlabeled: bool = False
    http_timeout: float = 30.0
    http_retries: int = 2
    concurrency: int = 1
    chat_url: str = ""
    chat_model: str = ""
    embed_url: str = ""
    embed_model: str = ""
    sparql_url: str = ""
    kg_prefix: str = FREEBASE_PREFIX
    entity_id_pattern: str = FREEBASE_ID_PATTERN
    label_property: str = FREEBASE_LABEL_PROPERTY

    def validate(self) -> None:
        for name in (
            "replan_limit",
            "max_path_corrections",
            "max_total_cycles",
            "prune_threshold",
            "kg_result_limit",
            "concurrency",
        ):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.parse_retries < 0 or self.http_retries < 0:
            raise ValueError("retry counts must be >= 0")
        if self.max_total_cycles < 8:
            raise ValueError("max_total_cycles must cover at least one full plan (>= 8)")

    def snapshot(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def _coerce(cls, name: str, raw: str):
        field_types = {f.name: f.type for f in dataclasses.fields(cls)}
        ftype = field_types[name]
        if ftype == "int":
            return int(raw)
        if ftype == "float":
            return float(raw)
        if ftype == "bool":
            return raw.strip().lower() in ("1", "true", "yes", "on")
        return raw

    @classmethod
    def load(
        cls,
        config_file: str | None = None,
        *,
        env: dict | None = None,
        overrides: dict | None = None,
    ) -> "EngineConfig":
        values: dict = {}
        names = {f.name for f in dataclasses.fields(cls)}
        if config_file:
            with open(config_file, encoding="utf-8") as fh:
                for lineno, raw in enumerate(fh, start=1):
                    line = raw.strip()
                    if not line or line.startswith("#"):
                        continue
                    key, sep, value = line.partition("=")
                    key = key.strip()
                    if not sep or key not in names:
                        raise ValueError(f"config file line {lineno}: unknown entry {line!r}")
                    values[key] = cls._coerce(key, value.strip())
        env = os.environ if env is None else env
        for name in names:
            env_value = env.get(ENV_PREFIX + name.upper())
            if env_value is not None:
                values[name] = cls._coerce(name, env_value)
        for name, value in (overrides or {}).items():
            if value is not None:
                values[name] = value
        config = cls(**values)
        config.validate()
        return config
