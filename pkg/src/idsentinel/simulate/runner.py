"""Executes scenario steps against the testbed servers.

Requests go over real HTTP. Scenario identity (source address, agent) and
virtual time ride on the harness headers the servers trust; labels record
the byte span each step produced in the shared log so detection quality can
be scored over exactly that span.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from urllib.parse import urlencode, urlsplit

from .. import httpclient
from ..accesslog import LogTailer, format_timestamp
from ..feeds import candidate_digest
from ..oauth.http import (
    FORWARDED_FOR_HEADER,
    FORWARDED_PORT_HEADER,
    HARNESS_TIME_HEADER,
)
from .scenarios import Step, build_steps

BENIGN = "benign"


class ScenarioAbort(RuntimeError):
    def __init__(self, message: str, report: "ScenarioReport"):
        super().__init__(message)
        self.report = report


@dataclass
class Targets:
    auth: str
    resource: str
    client_code: str
    client_implicit: str
    client_id_code: str = ""
    client_id_implicit: str = ""
    redirect_uri_code: str = ""
    redirect_uri_implicit: str = ""
    log_path: str = ""

    def base(self, key: str) -> str:
        return {
            "auth": self.auth,
            "resource": self.resource,
            "client_code": self.client_code,
            "client_implicit": self.client_implicit,
        }[key]

    @classmethod
    def from_state_file(cls, path: str | Path) -> "Targets":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(
            auth=doc["auth_base"],
            resource=doc["resource_base"],
            client_code=doc["client_code_base"],
            client_implicit=doc["client_implicit_base"],
            client_id_code=doc.get("client_id_code", ""),
            client_id_implicit=doc.get("client_id_implicit", ""),
            redirect_uri_code=doc.get("redirect_uri_code", ""),
            redirect_uri_implicit=doc.get("redirect_uri_implicit", ""),
            log_path=doc.get("log_path", ""),
        )


@dataclass
class ScenarioReport:
    scenario: str
    seed: int
    request_count: int = 0
    labels: list[dict] = field(default_factory=list)
    log_span: tuple[int, int] = (0, 0)
    transcript_digest: str = ""
    completed: bool = False

    def to_json(self) -> dict:
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "request_count": self.request_count,
            "labels": self.labels,
            "log_span": list(self.log_span),
            "transcript_digest": self.transcript_digest,
            "completed": self.completed,
        }


def export_ground_truth(report: ScenarioReport, path: str | Path) -> None:
    """JSONL, one label per line, keyed by scenario, step index, log offsets."""
    with open(path, "w", encoding="utf-8") as fh:
        for row in report.labels:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def load_ground_truth(path: str | Path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


def _synthetic_port(ip: str) -> int:
    # stable per source address so reruns serialize identically
    return 40000 + sum(ip.encode()) * 131 % 20000


class ScenarioRunner:
    def __init__(self, targets: Targets, *, anchor: datetime):
        self.targets = targets
        self.anchor = anchor
        self._transcript = hashlib.sha256()

    # -- helpers --------------------------------------------------------------

    def _log_size(self) -> int:
        if not self.targets.log_path:
            return -1
        try:
            return os.path.getsize(self.targets.log_path)
        except OSError:
            return -1

    def _headers(self, step_time: datetime, ip: str, ua: str) -> list[tuple[str, str]]:
        return [
            ("User-Agent", ua),
            (FORWARDED_FOR_HEADER, ip),
            (FORWARDED_PORT_HEADER, str(_synthetic_port(ip))),
            (HARNESS_TIME_HEADER, format_timestamp(step_time)),
        ]

    def _send(self, base_key: str, method: str, path: str, headers, body: bytes | None):
        canon = "\n".join(
            [f"{method} {base_key} {path}"]
            + [f"{n}: {v}" for n, v in headers]
            + [body.hex() if body else ""]
        )
        self._transcript.update(canon.encode("utf-8"))
        self._transcript.update(b"\x00")
        return httpclient.request(self.targets.base(base_key), method, path, headers=headers, body=body)

    def _last_bearer_from_log(self) -> str | None:
        if not self.targets.log_path:
            return None
        tailer = LogTailer(self.targets.log_path)
        token = None
        for record, _next in tailer.tail(0):
            auth = record.header("Authorization") or ""
            scheme, _, value = auth.partition(" ")
            if scheme.lower() == "bearer" and value.strip():
                token = value.strip()
        return token

    def _resolve(self, ref: str | None, ctx: dict) -> str | None:
        if ref is None:
            return None
        if ref == "log:last_bearer":
            token = self._last_bearer_from_log()
            if token is None:
                raise ScenarioAbort("no bearer token observable in the log", self._partial)
            ctx["token"] = token
            return token
        if ref.startswith("$"):
            return ctx.get(ref[1:], "")
        return ctx.get(ref) if ref in ctx else ref

    # -- step execution ---------------------------------------------------------

    def run(self, name: str, seed: int) -> ScenarioReport:
        steps = build_steps(name, seed)
        report = ScenarioReport(scenario=name, seed=seed)
        self._partial = report
        ctx: dict = {}
        span_start = self._log_size()

        for index, step in enumerate(steps):
            step_time = self.anchor + timedelta(milliseconds=step.at_ms)
            start = self._log_size()
            try:
                self._execute(step, step_time, ctx)
            except httpclient.TargetUnreachable as exc:
                report.log_span = (span_start, self._log_size())
                report.transcript_digest = self._transcript.hexdigest()
                raise ScenarioAbort(f"step {index} ({step.action}): {exc}", report) from exc
            report.request_count += 1
            end = self._log_size()
            entity = step.entity
            if entity.startswith("$"):
                entity = ctx.get(entity[1:], "")
            report.labels.append(
                {
                    "scenario": name,
                    "seed": seed,
                    "step_index": index,
                    "attack_class": step.label,
                    "entity": entity,
                    "start_offset": start,
                    "end_offset": end,
                }
            )

        report.log_span = (span_start, self._log_size())
        report.transcript_digest = self._transcript.hexdigest()
        report.completed = True
        return report

    def _execute(self, step: Step, step_time: datetime, ctx: dict) -> None:
        p = step.params
        do = getattr(self, f"_do_{step.action}", None)
        if do is None:
            raise ValueError(f"unknown step action: {step.action!r}")
        do(p, step_time, ctx)

    def _do_login(self, p, step_time, ctx) -> None:
        headers = self._headers(step_time, p["ip"], p["ua"])
        headers.append(("Content-Type", "application/x-www-form-urlencoded"))
        headers.append(("X-Cred-Digest", candidate_digest(p["password"])))
        body = urlencode({"username": p["user"], "password": p["password"]}).encode("utf-8")
        resp = self._send("auth", "POST", "/login", headers, body)
        outcome = "success" if resp.status == 200 else "failure"
        if outcome != p.get("expect", "success"):
            raise ValueError(
                f"scenario expectation broken: login {p['user']} -> {resp.status}, expected {p['expect']}"
            )
        if outcome == "success":
            for hname, value in resp.headers:
                if hname.lower() == "set-cookie" and value.startswith("sid="):
                    sid = value.split(";", 1)[0].split("=", 1)[1]
                    ctx[f"sid:{p['user']}"] = sid
                    ctx["sid"] = sid

    def _client_meta(self, client: str) -> tuple[str, str, str]:
        if client == "code":
            return self.targets.client_id_code, self.targets.redirect_uri_code, "client_code"
        return self.targets.client_id_implicit, self.targets.redirect_uri_implicit, "client_implicit"

    def _do_authorize(self, p, step_time, ctx) -> None:
        client_id, redirect_uri, _base = self._client_meta(p["client"])
        query = urlencode(
            {
                "client_id": client_id,
                "redirect_uri": redirect_uri,
                "response_type": p["response_type"],
                "state": p["state"],
            }
        )
        headers = self._headers(step_time, p["ip"], p["ua"])
        sid = self._resolve(p.get("sid_ref"), ctx)
        if sid:
            headers.append(("Cookie", f"sid={sid}"))
        resp = self._send("auth", "GET", f"/authorize?{query}", headers, None)
        location = resp.header("Location") or ""
        ctx[f"location:{p['user']}"] = location
        parts = urlsplit(location)
        if p["response_type"] == "code":
            q = dict(x.split("=", 1) for x in parts.query.split("&") if "=" in x)
            if "code" in q:
                ctx[f"code:{p['user']}"] = q["code"]
        else:
            f = dict(x.split("=", 1) for x in parts.fragment.split("&") if "=" in x)
            if "access_token" in f:
                ctx[f"token:{p['user']}"] = f["access_token"]

    def _do_cb(self, p, step_time, ctx) -> None:
        _cid, _ruri, base = self._client_meta(p["client"])
        location = ctx.get(f"location:{p['user']}", "")
        parts = urlsplit(location)  # the user agent never forwards the fragment
        path = parts.path or "/cb"
        if parts.query:
            path += f"?{parts.query}"
        headers = self._headers(step_time, p["ip"], p["ua"])
        resp = self._send(base, "GET", path, headers, None)
        for hname, value in resp.headers:
            if hname.lower() == "set-cookie" and value.startswith("csid="):
                ctx[f"csid:{p['user']}"] = value.split(";", 1)[0].split("=", 1)[1]

    def _do_profile(self, p, step_time, ctx) -> None:
        _cid, _ruri, base = self._client_meta(p["client"])
        headers = self._headers(step_time, p["ip"], p["ua"])
        csid = ctx.get(f"csid:{p['user']}", "")
        headers.append(("Cookie", f"csid={csid}"))
        self._send(base, "GET", "/profile", headers, None)

    def _do_userinfo(self, p, step_time, ctx) -> None:
        token = self._resolve(p["token_ref"], ctx) or ""
        ctx["token"] = token
        headers = self._headers(step_time, p["ip"], p["ua"])
        headers.append(("Authorization", f"Bearer {token}"))
        sid = self._resolve(p.get("sid_ref"), ctx)
        if sid:
            headers.append(("Cookie", f"sid={sid}"))
        self._send("resource", "GET", "/api/userinfo", headers, None)

    def _do_register_client(self, p, step_time, ctx) -> None:
        headers = self._headers(step_time, p["ip"], p["ua"])
        sid = ctx.get(f"sid:{p['user']}", "")
        headers.append(("Cookie", f"sid={sid}"))
        headers.append(("Content-Type", "application/json"))
        body = json.dumps({"redirect_uris": p["redirect_uris"]}).encode("utf-8")
        self._send("auth", "POST", "/clients", headers, body)

    def _do_raw(self, p, step_time, ctx) -> None:
        headers = self._headers(step_time, p["ip"], p["ua"])
        for name, value in p.get("headers", []):
            headers.append((name, value))
        body = p.get("body", "").encode("utf-8") if p.get("body") else None
        self._send(p["base"], p["method"], p["path"], headers, body)
