"""Runtime configuration shared by the service and the CLI.

Config files may be TOML or JSON; environment variables (LD_MODEL_PATH,
LD_TOKENIZER_PATH, LD_BACKEND, LD_THRESHOLD, LD_PORT, LD_MAX_BATCH) override
file values.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from groundcheck.detection import ScoringBackend, backend_from_spec


@dataclass
class ServiceConfig:
    backend: str = "mock:lexical"
    model_path: str = ""
    tokenizer_path: str = "whitespace"
    threshold: float = 0.5
    host: str = "127.0.0.1"
    port: int = 8000
    max_batch: int = 64
    max_length: int = 4096
    batch_wait_ms: float = 10.0
    queue_size: int = 256
    cors_origins: list[str] = field(default_factory=lambda: ["*"])


_ENV_OVERRIDES = {
    "LD_MODEL_PATH": ("model_path", str),
    "LD_TOKENIZER_PATH": ("tokenizer_path", str),
    "LD_BACKEND": ("backend", str),
    "LD_THRESHOLD": ("threshold", float),
    "LD_PORT": ("port", int),
    "LD_MAX_BATCH": ("max_batch", int),
}


def load_config(path: str | Path | None = None, env: dict | None = None) -> ServiceConfig:
    """Read a TOML/JSON config file (optional) and apply env overrides."""
    raw: dict = {}
    if path is not None:
        data = Path(path).read_bytes()
        if str(path).endswith(".json"):
            raw = json.loads(data)
        else:
            raw = tomllib.loads(data.decode("utf-8"))
    known = {f.name for f in fields(ServiceConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    config = ServiceConfig(**raw)

    env = os.environ if env is None else env
    for var, (attr, cast) in _ENV_OVERRIDES.items():
        if var in env and env[var] != "":
            setattr(config, attr, cast(env[var]))
    if not 0.0 < config.threshold < 1.0:
        raise ValueError(f"threshold must be in (0, 1), got {config.threshold}")
    return config


def build_backend(config: ServiceConfig) -> ScoringBackend:
    """Instantiate the configured scoring backend."""
    spec = config.backend
    if spec == "graph" and config.model_path:
        spec = f"graph:{config.model_path}"
    return backend_from_spec(spec, max_length=config.max_length)
