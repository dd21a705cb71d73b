"""Situational HTTP+JSON API for the operator console and the CLI.

Bearer-token auth from configuration (a full operator IdM here would be
circular). Event streaming is one-way server-sent events with at-least-once
delivery; clients dedup by event id.
"""

from __future__ import annotations

import json
import threading
import time
from pathlib import Path

from ..accesslog import format_timestamp, parse_timestamp, utc_ms
from ..detect.engine import DetectionEngine
from ..detect.events import TRIAGE_ACTIONS, TriageConflict
from ..feeds import ContextGraph, ProjectionError, project_blast_radius
from ..oauth.http import Request, Response
from .store import EventStore

STATIC_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "application/javascript",
    ".css": "text/css",
    ".map": "application/json",
    ".ico": "image/x-icon",
    ".svg": "image/svg+xml",
}


def _error(status: int, code: str, message: str) -> Response:
    return Response.json({"code": code, "message": message}, status=status)


class SituationalApi:
    def __init__(
        self,
        engine: DetectionEngine,
        store: EventStore,
        *,
        api_token: str,
        graph: ContextGraph | None = None,
        resolver=None,
        scenario_catalog: list[dict] | None = None,
        scenario_executor=None,
        static_dir: str | Path | None = None,
    ):
        self.engine = engine
        self.store = store
        self.api_token = api_token
        self.graph = graph
        self.resolver = resolver
        self.scenario_catalog = scenario_catalog or []
        self.scenario_executor = scenario_executor
        self.static_dir = Path(static_dir) if static_dir else None
        self.stopping = threading.Event()
        self._runs: dict[str, dict] = {}
        self._runs_lock = threading.Lock()
        self._run_seq = 0

    # -- dispatch ---------------------------------------------------------

    def handle(self, request: Request) -> Response:
        path = request.path_only
        if self.static_dir is not None and (path == "/console" or path.startswith("/console/")):
            return self._static(path)
        if not self._authorized(request):
            return _error(401, "unauthorized", "missing or invalid bearer token")

        if request.method == "GET" and path == "/anomalies":
            return self.list_anomalies(request)
        if request.method == "GET" and path.startswith("/anomalies/"):
            return self.get_anomaly(path.removeprefix("/anomalies/"))
        if request.method == "POST" and path.startswith("/anomalies/") and path.endswith("/triage"):
            return self.triage(path.removeprefix("/anomalies/").removesuffix("/triage"), request)
        if request.method == "GET" and path == "/situation":
            return Response.json(self.engine.snapshot())
        if request.method == "GET" and path.startswith("/projection/"):
            return self.projection(path.removeprefix("/projection/"))
        if request.method == "GET" and path == "/rules":
            return Response.json([r.to_json() for r in self.engine.rules.values()])
        if request.method == "PATCH" and path.startswith("/rules/"):
            return self.patch_rule(path.removeprefix("/rules/"), request)
        if request.method == "GET" and path == "/scenarios":
            return Response.json(self.scenario_catalog)
        if request.method == "POST" and path.startswith("/scenarios/") and path.endswith(":run"):
            return self.trigger_scenario(path.removeprefix("/scenarios/").removesuffix(":run"), request)
        if request.method == "GET" and path.startswith("/scenarios/runs/"):
            return self.run_status(path.removeprefix("/scenarios/runs/"))
        if request.method == "GET" and path == "/events/stream":
            return self.stream(request)
        return _error(404, "not_found", "no such endpoint")

    def _authorized(self, request: Request) -> bool:
        auth = request.header("Authorization") or ""
        scheme, _, value = auth.partition(" ")
        if scheme.lower() == "bearer" and value.strip() == self.api_token:
            return True
        return request.query.get("token") == self.api_token

    # -- anomalies ----------------------------------------------------------

    def _filtered_events(self, query: dict) -> list:
        with self.engine.lock:
            events = list(self.engine.events)
        cls = query.get("class")
        severity = query.get("severity")
        status = query.get("status")
        since = parse_timestamp(query["since"]) if query.get("since") else None
        until = parse_timestamp(query["until"]) if query.get("until") else None
        out = []
        for ev in events:
            if cls and ev.attack_class != cls:
                continue
            if severity and ev.severity != severity:
                continue
            if status and ev.status != status:
                continue
            if since and ev.last_seen < since:
                continue
            if until and ev.last_seen > until:
                continue
            out.append(ev)
        out.sort(key=lambda e: (e.last_seen, e.event_id), reverse=True)
        return out

    def list_anomalies(self, request: Request) -> Response:
        query = request.query
        try:
            page = max(1, int(query.get("page", "1")))
            page_size = max(1, int(query.get("page_size", "50")))
        except ValueError:
            return _error(400, "bad_request", "page and page_size must be integers")
        events = self._filtered_events(query)
        start = (page - 1) * page_size
        chunk = events[start : start + page_size]
        return Response.json(
            {
                "events": [e.to_json() for e in chunk],
                "page": page,
                "page_size": page_size,
                "total": len(events),
            }
        )

    def _event_or_none(self, event_id_text: str):
        try:
            event_id = int(event_id_text)
        except ValueError:
            return None
        return self.engine.get_event(event_id)

    def _projection_json(self, event) -> dict | None:
        if self.graph is None:
            return None
        try:
            return project_blast_radius(event, self.graph, resolver=self.resolver).to_json()
        except ProjectionError:
            return None

    def get_anomaly(self, event_id_text: str) -> Response:
        event = self._event_or_none(event_id_text)
        if event is None:
            return _error(404, "not_found", f"no event {event_id_text}")
        doc = event.to_json()
        doc["projection"] = self._projection_json(event)
        return Response.json(doc)

    def triage(self, event_id_text: str, request: Request) -> Response:
        event = self._event_or_none(event_id_text)
        if event is None:
            return _error(404, "not_found", f"no event {event_id_text}")
        try:
            body = request.json()
        except ValueError:
            return _error(400, "bad_request", "body must be JSON")
        action = body.get("action", "")
        actor = body.get("actor", "")
        note = body.get("note")
        if action not in TRIAGE_ACTIONS:
            return _error(400, "bad_request", f"action must be one of {sorted(TRIAGE_ACTIONS)}")
        if not actor:
            return _error(400, "bad_request", "actor is required")
        try:
            with self.engine.lock:
                event.apply_triage(action)
                if action == "mark_benign":
                    self.engine.suppress(event.dedup_key)
        except TriageConflict as exc:
            return _error(409, "conflict", str(exc))
        entry = {
            "kind": "triage",
            "event_id": event.event_id,
            "action": action,
            "actor": actor,
            "at": format_timestamp(utc_ms()),
            "note": note,
        }
        if action == "mark_benign":
            entry["suppressed_rule_id"] = event.rule_id
            entry["suppressed_dedup_key"] = event.dedup_key
        self.store.record_audit(entry)
        self.store.record_event(event)
        return Response.json(event.to_json())

    def projection(self, event_id_text: str) -> Response:
        event = self._event_or_none(event_id_text)
        if event is None:
            return _error(404, "not_found", f"no event {event_id_text}")
        if self.graph is None:
            return _error(422, "unresolvable", "no context graph loaded")
        try:
            projection = project_blast_radius(event, self.graph, resolver=self.resolver)
        except ProjectionError as exc:
            return _error(422, "unresolvable", str(exc))
        return Response.json(projection.to_json())

    # -- rules ----------------------------------------------------------------

    def patch_rule(self, rule_id: str, request: Request) -> Response:
        try:
            body = request.json()
        except ValueError:
            return _error(400, "bad_request", "body must be JSON")
        changes = {k: body[k] for k in ("threshold", "window_seconds", "enabled", "severity") if k in body}
        if "params" in body:
            changes["params"] = body["params"]
        try:
            rule = self.engine.update_rule(rule_id, **changes)
        except KeyError:
            return _error(404, "not_found", f"no rule {rule_id}")
        except ValueError as exc:
            return _error(400, "bad_request", str(exc))
        self.store.record_audit(
            {
                "kind": "rule_update",
                "rule_id": rule_id,
                "changes": changes,
                "at": format_timestamp(utc_ms()),
            }
        )
        return Response.json(rule.to_json())

    # -- scenario drills ----------------------------------------------------------

    def trigger_scenario(self, name: str, request: Request) -> Response:
        if self.scenario_executor is None:
            return _error(422, "unavailable", "no scenario executor wired")
        if name not in {c["name"] for c in self.scenario_catalog}:
            return _error(404, "not_found", f"no scenario {name}")
        try:
            body = request.json() if request.body else {}
        except ValueError:
            return _error(400, "bad_request", "body must be JSON")
        seed = int(body.get("seed", 42))

        with self._runs_lock:
            if any(r["status"] == "running" for r in self._runs.values()):
                return _error(409, "busy", "a scenario run is already in progress")
            self._run_seq += 1
            run_id = f"run-{self._run_seq}"
            self._runs[run_id] = {"status": "running", "scenario": name, "seed": seed}

        def worker():
            try:
                report = self.scenario_executor(name, seed)
                with self._runs_lock:
                    self._runs[run_id].update(status="done", report=report.to_json())
            except Exception as exc:
                with self._runs_lock:
                    self._runs[run_id].update(status="error", error=str(exc))

        threading.Thread(target=worker, name=f"drill-{run_id}", daemon=True).start()
        return Response.json({"run_id": run_id, "status": "running"}, status=202)

    def run_status(self, run_id: str) -> Response:
        with self._runs_lock:
            run = self._runs.get(run_id)
            if run is None:
                return _error(404, "not_found", f"no run {run_id}")
            return Response.json(dict(run))

    # -- event stream ----------------------------------------------------------------

    def stream(self, request: Request) -> Response:
        try:
            since = int(request.query.get("since", "0"))
        except ValueError:
            return _error(400, "bad_request", "since must be an event id")
        resp = Response(status=200)
        resp.headers += [
            ("Content-Type", "text/event-stream"),
            ("Cache-Control", "no-cache"),
        ]
        resp.stream = self._event_frames(since)
        return resp

    def _event_frames(self, since: int):
        yield b": stream open\n\n"
        sent: dict[int, tuple] = {}
        last_beat = time.monotonic()
        while not self.stopping.is_set():
            with self.engine.lock:
                pending = [
                    ev
                    for ev in self.engine.events
                    if ev.event_id > since
                    and sent.get(ev.event_id)
                    != (ev.status, ev.last_seen, len(ev.evidence))
                ]
                frames = []
                for ev in pending:
                    sent[ev.event_id] = (ev.status, ev.last_seen, len(ev.evidence))
                    frames.append((ev.event_id, json.dumps(ev.to_json(), ensure_ascii=False)))
            for event_id, payload in frames:
                yield f"id: {event_id}\ndata: {payload}\n\n".encode("utf-8")
            now = time.monotonic()
            if now - last_beat >= 1.0:
                last_beat = now
                yield b": ping\n\n"
            time.sleep(0.05)

    # -- console static files --------------------------------------------------------

    def _static(self, path: str) -> Response:
        rel = path.removeprefix("/console").lstrip("/") or "index.html"
        target = (self.static_dir / rel).resolve()
        if not str(target).startswith(str(self.static_dir.resolve())) or not target.is_file():
            return _error(404, "not_found", "no such file")
        ctype = STATIC_TYPES.get(target.suffix, "application/octet-stream")
        resp = Response(status=200, body=target.read_bytes())
        resp.headers.append(("Content-Type", ctype))
        return resp
