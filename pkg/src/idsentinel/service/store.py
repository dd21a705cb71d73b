"""Append-only persistence for events and the triage audit trail.

events.jsonl gets one full row per event touch (latest version wins on
load); audit.jsonl is the immutable history of triage actions and rule
changes. A compacted snapshot is written on shutdown.
"""

from __future__ import annotations

import json
import threading
from pathlib import Path

from ..detect.events import AnomalyEvent


class EventStore:
    def __init__(self, run_dir: str | Path):
        self.run_dir = Path(run_dir)
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self.events_path = self.run_dir / "events.jsonl"
        self.audit_path = self.run_dir / "audit.jsonl"
        self.snapshot_path = self.run_dir / "snapshot.json"
        self._lock = threading.Lock()

    def record_event(self, event: AnomalyEvent) -> None:
        row = json.dumps(event.to_json(), ensure_ascii=False)
        with self._lock, open(self.events_path, "a", encoding="utf-8") as fh:
            fh.write(row + "\n")

    def record_audit(self, entry: dict) -> None:
        row = json.dumps(entry, ensure_ascii=False)
        with self._lock, open(self.audit_path, "a", encoding="utf-8") as fh:
            fh.write(row + "\n")

    def load_events(self) -> list[AnomalyEvent]:
        """Latest persisted version of every event, id-ordered."""
        latest: dict[int, dict] = {}
        if self.events_path.exists():
            with open(self.events_path, encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    obj = json.loads(line)
                    latest[obj["event_id"]] = obj
        if self.snapshot_path.exists():
            snap = json.loads(self.snapshot_path.read_text(encoding="utf-8"))
            for obj in snap.get("events", []):
                latest.setdefault(obj["event_id"], obj)
        return [AnomalyEvent.from_json(latest[eid]) for eid in sorted(latest)]

    def load_audit(self) -> list[dict]:
        rows = []
        if self.audit_path.exists():
            with open(self.audit_path, encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if line:
                        rows.append(json.loads(line))
        return rows

    def write_snapshot(self, events: list[AnomalyEvent], engine_state: dict) -> None:
        doc = {
            "events": [e.to_json() for e in events],
            "engine_state": engine_state,
        }
        with self._lock:
            self.snapshot_path.write_text(
                json.dumps(doc, ensure_ascii=False, indent=1) + "\n", encoding="utf-8"
            )

    def load_engine_state(self) -> dict | None:
        state_path = self.run_dir / "engine_state.json"
        if state_path.exists():
            return json.loads(state_path.read_text(encoding="utf-8"))
        if self.snapshot_path.exists():
            snap = json.loads(self.snapshot_path.read_text(encoding="utf-8"))
            return snap.get("engine_state")
        return None

    def write_engine_state(self, state: dict) -> None:
        state_path = self.run_dir / "engine_state.json"
        with self._lock:
            state_path.write_text(json.dumps(state, ensure_ascii=False) + "\n", encoding="utf-8")
