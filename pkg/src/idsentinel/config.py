"""Testbed configuration: JSON file plus IDSENTINEL_* environment overrides."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields
from datetime import datetime, timezone
from pathlib import Path

DEFAULT_VIRTUAL_BASE = "2024-05-01T00:00:00.000Z"

# ports default to 0 = pick a free ephemeral port at startup
_PORT_FIELDS = ("auth_port", "resource_port", "client_code_port", "client_implicit_port", "api_port")


@dataclass
class Config:
    seed: int = 42
    run_dir: str = "./run"
    log_path: str = ""  # default: <run_dir>/header_logs.log
    host: str = "127.0.0.1"
    auth_port: int = 0
    resource_port: int = 0
    client_code_port: int = 0
    client_implicit_port: int = 0
    api_port: int = 0
    api_token: str = "local-dev-token"
    code_ttl_seconds: int = 60
    token_ttl_seconds: int = 3600
    trust_harness_headers: bool = True
    virtual_base_time: str = DEFAULT_VIRTUAL_BASE
    fixtures_dir: str = "./fixtures"
    rules_path: str = ""  # default: <fixtures_dir>/rules.json, built-ins if absent
    leaks_path: str = ""  # default: <fixtures_dir>/leaks.jsonl
    context_path: str = ""  # default: <fixtures_dir>/context.yaml
    wordlist_path: str = ""  # default: <fixtures_dir>/wordlist.txt
    agent_denylist: list[str] = field(default_factory=lambda: ["curl", "wget", "python-requests"])
    xss_signatures: list[str] = field(default_factory=lambda: ["<script", "javascript:", "onerror="])

    def __post_init__(self):
        run = Path(self.run_dir)
        fixtures = Path(self.fixtures_dir)
        if not self.log_path:
            self.log_path = str(run / "header_logs.log")
        if not self.leaks_path:
            self.leaks_path = str(fixtures / "leaks.jsonl")
        if not self.context_path:
            self.context_path = str(fixtures / "context.yaml")
        if not self.wordlist_path:
            self.wordlist_path = str(fixtures / "wordlist.txt")

    @property
    def virtual_base(self) -> datetime:
        text = self.virtual_base_time.replace("Z", "+00:00")
        return datetime.fromisoformat(text).astimezone(timezone.utc)


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> Config:
    """Build a Config from an optional JSON file, env vars, then overrides."""
    data: dict = {}
    if path is not None:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(raw, dict):
            raise ValueError(f"config file must hold a JSON object: {path}")
        data.update(raw)

    known = {f.name: f.type for f in fields(Config)}
    unknown = set(data) - set(known)
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")

    for name in known:
        env = os.environ.get(f"IDSENTINEL_{name.upper()}")
        if env is None:
            continue
        if name in _PORT_FIELDS or name in ("seed", "code_ttl_seconds", "token_ttl_seconds"):
            data[name] = int(env)
        elif name == "trust_harness_headers":
            data[name] = env.lower() in ("1", "true", "yes", "on")
        elif name in ("agent_denylist", "xss_signatures"):
            data[name] = [x for x in env.split(",") if x]
        else:
            data[name] = env

    if overrides:
        data.update(overrides)
    return Config(**data)
