"""Anomaly events and their triage lifecycle."""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime

from ..accesslog import format_timestamp, parse_timestamp

STATUS_NEW = "new"
STATUS_ACKNOWLEDGED = "acknowledged"
STATUS_DISMISSED = "dismissed"
STATUS_BENIGN = "benign"
STATUSES = (STATUS_NEW, STATUS_ACKNOWLEDGED, STATUS_DISMISSED, STATUS_BENIGN)

TRIAGE_ACTIONS = {
    "acknowledge": STATUS_ACKNOWLEDGED,
    "dismiss": STATUS_DISMISSED,
    "mark_benign": STATUS_BENIGN,
}


class TriageConflict(ValueError):
    pass


@dataclass(frozen=True)
class Evidence:
    offset: int
    line: str

    def to_json(self) -> list:
        return [self.offset, self.line]


@dataclass
class Entities:
    token: str | None = None
    username: str | None = None
    session_id: str | None = None
    source_ips: set[str] = field(default_factory=set)
    user_agents: set[str] = field(default_factory=set)

    def merge(self, other: "Entities") -> None:
        self.token = self.token or other.token
        self.username = self.username or other.username
        self.session_id = self.session_id or other.session_id
        self.source_ips |= other.source_ips
        self.user_agents |= other.user_agents

    def to_json(self) -> dict:
        return {
            "token": self.token,
            "username": self.username,
            "session_id": self.session_id,
            "source_ips": sorted(self.source_ips),
            "user_agents": sorted(self.user_agents),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Entities":
        return cls(
            token=obj.get("token"),
            username=obj.get("username"),
            session_id=obj.get("session_id"),
            source_ips=set(obj.get("source_ips", ())),
            user_agents=set(obj.get("user_agents", ())),
        )


@dataclass
class AnomalyEvent:
    event_id: int
    rule_id: str
    attack_class: str
    severity: str
    first_seen: datetime
    last_seen: datetime
    entities: Entities
    evidence: list[Evidence]
    dedup_key: str
    status: str = STATUS_NEW

    def attach(self, seen: datetime, evidence: list[Evidence], entities: Entities) -> None:
        """A repeated hit inside the live window updates the existing alert."""
        if seen > self.last_seen:
            self.last_seen = seen
        known = {(e.offset, e.line) for e in self.evidence}
        for item in evidence:
            if (item.offset, item.line) not in known:
                self.evidence.append(item)
                known.add((item.offset, item.line))
        self.entities.merge(entities)

    def apply_triage(self, action: str) -> str:
        new_status = TRIAGE_ACTIONS.get(action)
        if new_status is None:
            raise ValueError(f"unknown triage action: {action!r}")
        if self.status != STATUS_NEW:
            raise TriageConflict(
                f"event {self.event_id} is {self.status}; only new events can be triaged"
            )
        self.status = new_status
        return new_status

    def evidence_offsets(self) -> list[int]:
        return [e.offset for e in self.evidence]

    def to_json(self) -> dict:
        return {
            "event_id": self.event_id,
            "rule_id": self.rule_id,
            "attack_class": self.attack_class,
            "severity": self.severity,
            "first_seen": format_timestamp(self.first_seen),
            "last_seen": format_timestamp(self.last_seen),
            "entities": self.entities.to_json(),
            "evidence": [e.to_json() for e in self.evidence],
            "dedup_key": self.dedup_key,
            "status": self.status,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "AnomalyEvent":
        return cls(
            event_id=obj["event_id"],
            rule_id=obj["rule_id"],
            attack_class=obj["attack_class"],
            severity=obj["severity"],
            first_seen=parse_timestamp(obj["first_seen"]),
            last_seen=parse_timestamp(obj["last_seen"]),
            entities=Entities.from_json(obj["entities"]),
            evidence=[Evidence(offset=e[0], line=e[1]) for e in obj["evidence"]],
            dedup_key=obj["dedup_key"],
            status=obj.get("status", STATUS_NEW),
        )
