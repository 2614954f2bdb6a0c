"""Configuration for the service and CLI: JSON file plus environment
overrides (SQLCLARIFY_<KEY>), plus endpoint-spec parsing."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, fields

from .errors import ConfigError
from .parser_gateway import KIND_HTTP, KIND_ORACLE, KIND_SUBPROCESS, KIND_TOY, ParserEndpoint

ENV_PREFIX = "SQLCLARIFY_"


@dataclass
class AppConfig:
    schemas: str | None = None  # None -> bundled corpus
    examples: str | None = None
    embeddings: str = "synthetic"  # "synthetic[:dim[:seed]]" or a GloVe-format path
    model: str | None = None  # trained projection + threshold; None -> identity
    stop_words: str | None = None
    templates: str | None = None
    endpoint: str = "toy"
    cap: int = 100
    option_count: int = 5
    session_ttl: float = 3600.0
    session_log: str | None = None
    static_dir: str | None = None

    @classmethod
    def load(cls, path: str | None = None, env: dict | None = None, **overrides) -> "AppConfig":
        values: dict = {}
        if path:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
            if not isinstance(data, dict):
                raise ConfigError(f"config file {path} must hold a JSON object")
            values.update(data)
        env = os.environ if env is None else env
        for f in fields(cls):
            key = ENV_PREFIX + f.name.upper()
            if key in env:
                raw = env[key]
                if f.type in ("int",):
                    values[f.name] = int(raw)
                elif f.type in ("float",):
                    values[f.name] = float(raw)
                else:
                    values[f.name] = raw
        for key, value in overrides.items():
            if value is not None:
                values[key] = value
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**values)
        cfg.cap = int(cfg.cap)
        cfg.option_count = int(cfg.option_count)
        cfg.session_ttl = float(cfg.session_ttl)
        return cfg


def parse_endpoint(spec: str) -> ParserEndpoint:
    """Endpoint spec: "toy[:strictness[:seed]]", "oracle",
    "subprocess:<command>", or "http:<url>"."""
    if spec == "oracle":
        return ParserEndpoint(kind=KIND_ORACLE)
    if spec == "toy" or spec.startswith("toy:"):
        parts = spec.split(":")
        strictness = float(parts[1]) if len(parts) > 1 and parts[1] else 1.0
        seed = int(parts[2]) if len(parts) > 2 else 0
        return ParserEndpoint(kind=KIND_TOY, strictness=strictness, seed=seed)
    if spec.startswith("subprocess:"):
        return ParserEndpoint(kind=KIND_SUBPROCESS, location=spec.split(":", 1)[1])
    if spec.startswith("http:") or spec.startswith("https:"):
        return ParserEndpoint(kind=KIND_HTTP, location=spec)
    raise ConfigError(f"unrecognized endpoint spec {spec!r}")


def parse_embedding_spec(spec: str):
    """Returns ("synthetic", dim, seed) or ("file", path)."""
    if spec == "synthetic" or spec.startswith("synthetic:"):
        parts = spec.split(":")
        dim = int(parts[1]) if len(parts) > 1 and parts[1] else 50
        seed = int(parts[2]) if len(parts) > 2 else 7
        return ("synthetic", dim, seed)
    return ("file", spec)
