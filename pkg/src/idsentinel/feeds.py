"""External and organizational inputs: leak feed, role concept, network plan.

Loaded indices are immutable after construction, so the engine and the
projection side can read them concurrently; a reload swaps the object.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from pathlib import Path

import yaml

_HEX_RE = re.compile(r"^[0-9a-f]{64}$")


class FeedLoadError(ValueError):
    pass


def candidate_digest(password: str) -> str:
    """Unsalted digest used only for leak matching; plaintext stays off the wire logs."""
    return hashlib.sha256(password.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class LeakRecord:
    username: str
    password_digest: str

    def __post_init__(self):
        if not self.username:
            raise ValueError("username must be non-empty")
        if not _HEX_RE.match(self.password_digest):
            raise ValueError("password_digest must be 64 lowercase hex chars")


class LeakIndex:
    """O(1) membership on (username, digest) pairs."""

    def __init__(self, records: list[LeakRecord]):
        pairs = [(r.username, r.password_digest) for r in records]
        self.pairs = frozenset(pairs)
        self.duplicate_count = len(pairs) - len(self.pairs)

    def __len__(self) -> int:
        return len(self.pairs)

    def __contains__(self, pair: tuple[str, str]) -> bool:
        return pair in self.pairs

    @classmethod
    def empty(cls) -> "LeakIndex":
        return cls([])


def load_leak_feed(path: str | Path) -> LeakIndex:
    records: list[LeakRecord] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                records.append(
                    LeakRecord(username=obj["username"], password_digest=obj["password_digest"])
                )
            except (ValueError, KeyError, TypeError) as exc:
                raise FeedLoadError(f"{path}: line {lineno}: {exc}") from None
    return LeakIndex(records)


@dataclass(frozen=True)
class SystemInfo:
    zone: str
    idms: bool = False


@dataclass(frozen=True)
class ContextGraph:
    """Role concept plus network plan: user -> roles -> permissions -> systems -> zone."""

    users: dict  # username -> frozenset of role names
    roles: dict  # role -> frozenset of permission names
    permissions: dict  # permission -> frozenset of system names
    systems: dict  # system -> SystemInfo

    def __post_init__(self):
        for user, roles in self.users.items():
            for role in roles:
                if role not in self.roles:
                    raise FeedLoadError(f"user {user!r} references undefined role {role!r}")
        for role, perms in self.roles.items():
            for perm in perms:
                if perm not in self.permissions:
                    raise FeedLoadError(f"role {role!r} references undefined permission {perm!r}")
        for perm, systems in self.permissions.items():
            for system in systems:
                if system not in self.systems:
                    raise FeedLoadError(f"permission {perm!r} references undefined system {system!r}")

    def reachable_systems(self, username: str) -> frozenset:
        systems = set()
        for role in self.users.get(username, frozenset()):
            for perm in self.roles[role]:
                systems.update(self.permissions[perm])
        return frozenset(systems)

    def with_user_role(self, username: str, role: str) -> "ContextGraph":
        users = dict(self.users)
        users[username] = frozenset(users.get(username, frozenset())) | {role}
        return ContextGraph(users=users, roles=self.roles, permissions=self.permissions, systems=self.systems)


def load_context(path: str | Path) -> ContextGraph:
    with open(path, encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    if not isinstance(doc, dict):
        raise FeedLoadError(f"{path}: document must be a mapping")
    missing = {"users", "roles", "permissions", "systems"} - set(doc)
    if missing:
        raise FeedLoadError(f"{path}: missing collections: {sorted(missing)}")

    def _nameset(section: str) -> dict:
        out = {}
        for name, values in (doc[section] or {}).items():
            if not isinstance(values, list):
                raise FeedLoadError(f"{path}: {section}.{name} must be a list")
            out[str(name)] = frozenset(str(v) for v in values)
        return out

    systems = {}
    for name, info in (doc["systems"] or {}).items():
        if not isinstance(info, dict) or "zone" not in info:
            raise FeedLoadError(f"{path}: systems.{name} must be a mapping with a zone")
        systems[str(name)] = SystemInfo(zone=str(info["zone"]), idms=bool(info.get("idms", False)))

    return ContextGraph(
        users=_nameset("users"),
        roles=_nameset("roles"),
        permissions=_nameset("permissions"),
        systems=systems,
    )


class ProjectionError(ValueError):
    pass


@dataclass(frozen=True)
class Projection:
    compromised_principals: tuple[str, ...]
    reachable_systems: frozenset
    zones: frozenset
    severity_uplift: str | None

    def to_json(self) -> dict:
        return {
            "compromised_principals": list(self.compromised_principals),
            "reachable_systems": sorted(self.reachable_systems),
            "zones": sorted(self.zones),
            "severity_uplift": self.severity_uplift,
        }


def project_blast_radius(event, graph: ContextGraph, resolver=None) -> Projection:
    """Walk user -> roles -> permissions -> systems for the event's principal.

    The uplift goes to high when the radius touches an identity-management
    system, the highest-value target.
    """
    username = event.entities.username
    if not username and resolver is not None and event.entities.token:
        username = resolver("token", event.entities.token)
    if not username and resolver is not None and event.entities.session_id:
        username = resolver("session", event.entities.session_id)
    if not username:
        raise ProjectionError(f"event {event.event_id}: no username or resolvable token")

    systems = graph.reachable_systems(username)
    zones = frozenset(graph.systems[s].zone for s in systems)
    uplift = "high" if any(graph.systems[s].idms for s in systems) else None
    return Projection(
        compromised_principals=(username,),
        reachable_systems=systems,
        zones=zones,
        severity_uplift=uplift,
    )
