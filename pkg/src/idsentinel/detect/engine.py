"""Rule evaluation over the access-log stream.

The engine keeps two kinds of state:

* sliding windows (failure counters, token sightings) that age out and are
  deliberately NOT persisted — after a restart recall inside a split window
  may dip, but no false event can appear;
* durable bindings (session/pair first sightings, per-user login baselines,
  suppressed dedup keys) that ARE persisted, because losing them would turn
  later benign traffic into false alarms or hide real reuse.

One logical ingestion order; snapshot() readers share the engine lock.
"""

from __future__ import annotations

import threading
from collections import Counter, deque
from dataclasses import dataclass
from datetime import datetime
from typing import Callable, Iterable

from ..accesslog import LogRecord, LogTailer, format_record
from .events import AnomalyEvent, Entities, Evidence, STATUS_BENIGN
from .rules import (
    AnomalyRule,
    CLASS_BRUTE_FORCE,
    CLASS_CREDENTIAL_STUFFING,
    CLASS_LEAKED_CREDENTIAL,
    CLASS_MITM,
    CLASS_PASSWORD_STUFFING,
    CLASS_PHISHING,
    CLASS_SESSION_HIJACKING,
    CLASS_SUSPICIOUS_AGENT,
    CLASS_TOKEN_REPLAY,
    CLASS_WORDLIST,
    CLASS_XSS_PROBE,
    default_rules,
)

Resolver = Callable[[str, str], "str | None"]

SESSION_COOKIE = "sid"


@dataclass
class RecordFeatures:
    """Everything the rules read from one log record."""

    ts: datetime
    ip: str
    ua: str
    token: str | None
    sid: str | None
    login_user: str | None
    login_result: str | None
    cred_digest: str | None
    haystack: str  # path plus header values, lowercased, for signature rules

    @property
    def is_login(self) -> bool:
        return self.login_user is not None and self.login_result in ("success", "failure")

    @property
    def is_login_failure(self) -> bool:
        return self.is_login and self.login_result == "failure"

    @property
    def is_login_success(self) -> bool:
        return self.is_login and self.login_result == "success"


def extract_features(record: LogRecord) -> RecordFeatures:
    token = None
    auth = record.header("Authorization") or ""
    scheme, _, value = auth.partition(" ")
    if scheme.lower() == "bearer" and value.strip():
        token = value.strip()

    sid = None
    cookie = record.header("Cookie") or ""
    for part in cookie.split(";"):
        name, sep, val = part.strip().partition("=")
        if sep and name == SESSION_COOKIE:
            sid = val
            break

    haystack = "\n".join([record.path_and_query] + [v for _, v in record.headers]).lower()
    return RecordFeatures(
        ts=record.timestamp,
        ip=record.source_ip,
        ua=record.header("User-Agent") or "",
        token=token,
        sid=sid,
        login_user=record.header("X-Login-User"),
        login_result=record.header("X-Login-Result"),
        cred_digest=record.header("X-Cred-Digest"),
        haystack=haystack,
    )


@dataclass(frozen=True)
class _Sighting:
    ts: datetime
    ip: str
    ua: str
    value: str  # rule-specific: username, token, digest...
    offset: int
    line: str

    def ref(self) -> Evidence:
        return Evidence(self.offset, self.line)


class DetectionEngine:
    def __init__(
        self,
        rules: dict[str, AnomalyRule] | None = None,
        *,
        leak_index=None,
        wordlist: Iterable[str] = (),
        resolver: Resolver | None = None,
    ):
        self.rules: dict[str, AnomalyRule] = dict(rules) if rules else default_rules()
        self.leak_index = leak_index
        self.wordlist = frozenset(wordlist)
        self.resolver = resolver
        self._lock = threading.RLock()

        self.offset = 0
        self.counters = {
            "lines_parsed": 0,
            "lines_malformed": 0,
            "events_emitted": 0,
            "events_suppressed": 0,
        }
        self.events: list[AnomalyEvent] = []
        self._next_event_id = 1
        self._live: dict[tuple[str, str], AnomalyEvent] = {}
        self._suppressed: set[str] = set()

        # sliding windows, keyed by (rule_id, key)
        self._windows: dict[tuple[str, str], deque[_Sighting]] = {}
        # durable bindings
        self._session_bind: dict[str, _Sighting] = {}
        self._pair_bind: dict[tuple[str, str], _Sighting] = {}
        self._baseline: dict[str, set[tuple[str, str]]] = {}

    @property
    def lock(self) -> threading.RLock:
        """Shared by snapshot/stream readers for consistent views."""
        return self._lock

    # -- rule plumbing ------------------------------------------------------

    def _by_class(self, attack_class: str) -> list[AnomalyRule]:
        return [r for r in self.rules.values() if r.enabled and r.attack_class == attack_class]

    def satisfies(self, rule: AnomalyRule, feats: RecordFeatures) -> bool:
        """Check a rule's required characteristics against one record."""
        for name in rule.required_characteristics:
            if name == "login_attempt":
                ok = feats.is_login
            elif name == "login_failure":
                ok = feats.is_login_failure
            elif name == "login_success":
                ok = feats.is_login_success
            elif name == "cred_digest":
                ok = feats.cred_digest is not None
            elif name == "bearer_token":
                ok = feats.token is not None
            elif name == "session_cookie":
                ok = feats.sid is not None
            elif name == "wordlist_username":
                ok = feats.login_user in self.wordlist
            elif name == "denylisted_agent":
                denylist = rule.params.get("denylist", [])
                ok = any(feats.ua.lower().startswith(p.lower()) for p in denylist)
            elif name == "xss_signature":
                signatures = rule.params.get("signatures", [])
                ok = any(sig.lower() in feats.haystack for sig in signatures)
            else:
                raise ValueError(f"{rule.rule_id}: unknown characteristic {name!r}")
            if not ok:
                return False
        return True

    def _window(self, rule: AnomalyRule, key: str, sighting: _Sighting) -> deque[_Sighting]:
        dq = self._windows.setdefault((rule.rule_id, key), deque())
        horizon = sighting.ts.timestamp() - rule.window_seconds
        while dq and dq[0].ts.timestamp() < horizon:
            dq.popleft()
        dq.append(sighting)
        return dq

    def _username_for(self, feats: RecordFeatures) -> str | None:
        if feats.login_user:
            return feats.login_user
        if self.resolver is not None:
            if feats.token:
                name = self.resolver("token", feats.token)
                if name:
                    return name
            if feats.sid:
                name = self.resolver("session", feats.sid)
                if name:
                    return name
        return None

    def _entity_label(self, feats: RecordFeatures, prefer: str) -> str:
        """Stable dedup entity: the abused principal when resolvable.

        A username survives scenario reruns (token and session values do
        not), which keeps dedup keys stable for suppression.
        """
        username = self._username_for(feats)
        if username:
            return f"user:{username}"
        if prefer == "token" and feats.token:
            return f"token:{feats.token}"
        if prefer == "session" and feats.sid:
            return f"session:{feats.sid}"
        return f"ip:{feats.ip}"

    def _emit(
        self,
        rule: AnomalyRule,
        feats: RecordFeatures,
        *,
        entity: str,
        evidence: list[Evidence],
        entities: Entities,
        touched: dict[int, AnomalyEvent],
    ) -> None:
        live_key = (rule.rule_id, entity)
        event = self._live.get(live_key)
        if event is not None and (feats.ts - event.last_seen).total_seconds() <= rule.window_seconds:
            if event.dedup_key in self._suppressed or event.status == STATUS_BENIGN:
                self.counters["events_suppressed"] += 1
                return
            event.attach(feats.ts, evidence, entities)
            touched[event.event_id] = event
            return

        bucket = int(feats.ts.timestamp() // rule.window_seconds)
        dedup_key = f"{rule.rule_id}|{entity}|{bucket}"
        if dedup_key in self._suppressed:
            self.counters["events_suppressed"] += 1
            return
        event = AnomalyEvent(
            event_id=self._next_event_id,
            rule_id=rule.rule_id,
            attack_class=rule.attack_class,
            severity=rule.severity,
            first_seen=feats.ts,
            last_seen=feats.ts,
            entities=entities,
            evidence=list(evidence),
            dedup_key=dedup_key,
        )
        self._next_event_id += 1
        self.events.append(event)
        self._live[live_key] = event
        self.counters["events_emitted"] += 1
        touched[event.event_id] = event

    # -- ingestion ----------------------------------------------------------

    def ingest(
        self, record: LogRecord, *, offset: int = -1, line: str | None = None
    ) -> list[AnomalyEvent]:
        """Evaluate all enabled rules over one record; returns touched events."""
        raw = line if line is not None else format_record(record)
        feats = extract_features(record)
        touched: dict[int, AnomalyEvent] = {}
        with self._lock:
            self.counters["lines_parsed"] += 1
            if feats.is_login:
                self._eval_login(feats, offset, raw, touched)
            claimed = self._eval_session(feats, offset, raw, touched)
            if feats.token and not claimed:
                self._eval_token(feats, offset, raw, touched)
            self._eval_signatures(feats, offset, raw, touched)
        return list(touched.values())

    def _eval_login(self, feats, offset, raw, touched) -> None:
        sighting = _Sighting(feats.ts, feats.ip, feats.ua, feats.login_user, offset, raw)
        user_entity = f"user:{feats.login_user}"

        for rule in self._by_class(CLASS_LEAKED_CREDENTIAL):
            if not self.satisfies(rule, feats) or self.leak_index is None:
                continue
            if (feats.login_user, feats.cred_digest) in self.leak_index:
                dq = self._window(rule, user_entity, sighting)
                if len(dq) >= rule.threshold:
                    self._emit(
                        rule,
                        feats,
                        entity=user_entity,
                        evidence=[s.ref() for s in dq],
                        entities=Entities(
                            username=feats.login_user,
                            source_ips={s.ip for s in dq},
                            user_agents={s.ua for s in dq},
                        ),
                        touched=touched,
                    )

        for rule in self._by_class(CLASS_BRUTE_FORCE):
            if not self.satisfies(rule, feats):
                continue
            dq = self._window(rule, user_entity, sighting)
            if len(dq) >= rule.threshold:
                self._emit(
                    rule,
                    feats,
                    entity=user_entity,
                    evidence=[s.ref() for s in dq],
                    entities=Entities(
                        username=feats.login_user,
                        source_ips={s.ip for s in dq},
                        user_agents={s.ua for s in dq},
                    ),
                    touched=touched,
                )

        for rule in self._by_class(CLASS_CREDENTIAL_STUFFING):
            if not self.satisfies(rule, feats):
                continue
            dq = self._window(rule, f"ip:{feats.ip}", sighting)
            if len({s.value for s in dq}) >= rule.threshold:
                self._emit(
                    rule,
                    feats,
                    entity=f"ip:{feats.ip}",
                    evidence=[s.ref() for s in dq],
                    entities=Entities(
                        source_ips={s.ip for s in dq}, user_agents={s.ua for s in dq}
                    ),
                    touched=touched,
                )

        for rule in self._by_class(CLASS_PASSWORD_STUFFING):
            if not self.satisfies(rule, feats):
                continue
            dq = self._window(rule, f"digest:{feats.cred_digest}", sighting)
            if len({s.value for s in dq}) >= rule.threshold:
                self._emit(
                    rule,
                    feats,
                    entity=f"digest:{feats.cred_digest}",
                    evidence=[s.ref() for s in dq],
                    entities=Entities(
                        source_ips={s.ip for s in dq}, user_agents={s.ua for s in dq}
                    ),
                    touched=touched,
                )

        for rule in self._by_class(CLASS_WORDLIST):
            if not self.satisfies(rule, feats):
                continue
            # one logical window: a list walk may rotate source addresses
            dq = self._window(rule, "*", sighting)
            if len({s.value for s in dq}) >= rule.threshold:
                self._emit(
                    rule,
                    feats,
                    entity="*",
                    evidence=[s.ref() for s in dq],
                    entities=Entities(
                        source_ips={s.ip for s in dq}, user_agents={s.ua for s in dq}
                    ),
                    touched=touched,
                )

        if feats.is_login_success:
            pair = (feats.ip, feats.ua)
            seen = self._baseline.setdefault(feats.login_user, set())
            for rule in self._by_class(CLASS_PHISHING):
                if not self.satisfies(rule, feats):
                    continue
                # cold start: no history for this user suppresses the rule
                if seen and pair not in seen:
                    dq = self._window(rule, user_entity, _Sighting(feats.ts, feats.ip, feats.ua, feats.login_user, offset, raw))
                    if len(dq) >= rule.threshold:
                        self._emit(
                            rule,
                            feats,
                            entity=user_entity,
                            evidence=[s.ref() for s in dq],
                            entities=Entities(
                                username=feats.login_user,
                                source_ips={s.ip for s in dq},
                                user_agents={s.ua for s in dq},
                            ),
                            touched=touched,
                        )
            seen.add(pair)

    def _eval_session(self, feats, offset, raw, touched) -> bool:
        """Session-reuse rules. Returns True when this record is claimed,
        in which case the more generic token rule must not double-report it."""
        if feats.sid is None:
            return False
        sighting = _Sighting(feats.ts, feats.ip, feats.ua, feats.sid, offset, raw)

        bind = self._session_bind.get(feats.sid)
        if bind is None:
            self._session_bind[feats.sid] = sighting
            if feats.token:
                self._pair_bind.setdefault((feats.sid, feats.token), sighting)
            return False

        hijack = feats.ip != bind.ip and feats.ua != bind.ua
        claimed = False
        if hijack:
            for rule in self._by_class(CLASS_SESSION_HIJACKING):
                if not self.satisfies(rule, feats):
                    continue
                entity = self._entity_label(feats, prefer="session")
                dq = self._window(rule, entity, sighting)
                if len(dq) >= rule.threshold:
                    self._emit(
                        rule,
                        feats,
                        entity=entity,
                        evidence=[bind.ref()] + [s.ref() for s in dq],
                        entities=Entities(
                            username=self._username_for(feats),
                            session_id=feats.sid,
                            source_ips={bind.ip} | {s.ip for s in dq},
                            user_agents={bind.ua} | {s.ua for s in dq},
                        ),
                        touched=touched,
                    )
                    claimed = True

        if feats.token:
            pair_key = (feats.sid, feats.token)
            pbind = self._pair_bind.get(pair_key)
            if pbind is None:
                if not hijack:
                    self._pair_bind[pair_key] = sighting
            elif feats.ip != pbind.ip and feats.ua == pbind.ua:
                # verbatim replay of captured session data: agent unchanged
                for rule in self._by_class(CLASS_MITM):
                    if not self.satisfies(rule, feats):
                        continue
                    entity = self._entity_label(feats, prefer="token")
                    dq = self._window(rule, entity, sighting)
                    if len(dq) >= rule.threshold:
                        self._emit(
                            rule,
                            feats,
                            entity=entity,
                            evidence=[pbind.ref()] + [s.ref() for s in dq],
                            entities=Entities(
                                token=feats.token,
                                username=self._username_for(feats),
                                session_id=feats.sid,
                                source_ips={pbind.ip} | {s.ip for s in dq},
                                user_agents={pbind.ua} | {s.ua for s in dq},
                            ),
                            touched=touched,
                        )
                        claimed = True
        return claimed

    def _eval_token(self, feats, offset, raw, touched) -> None:
        sighting = _Sighting(feats.ts, feats.ip, feats.ua, feats.token, offset, raw)
        for rule in self._by_class(CLASS_TOKEN_REPLAY):
            if not self.satisfies(rule, feats):
                continue
            dq = self._window(rule, f"token:{feats.token}", sighting)
            ips = {s.ip for s in dq}
            agents = {s.ua for s in dq}
            # same address and agent reusing a live token is normal API usage
            if max(len(ips), len(agents)) >= rule.threshold:
                entity = self._entity_label(feats, prefer="token")
                self._emit(
                    rule,
                    feats,
                    entity=entity,
                    evidence=[s.ref() for s in dq],
                    entities=Entities(
                        token=feats.token,
                        username=self._username_for(feats),
                        source_ips=ips,
                        user_agents=agents,
                    ),
                    touched=touched,
                )

    def _eval_signatures(self, feats, offset, raw, touched) -> None:
        sighting = _Sighting(feats.ts, feats.ip, feats.ua, feats.ip, offset, raw)
        for attack_class in (CLASS_SUSPICIOUS_AGENT, CLASS_XSS_PROBE):
            for rule in self._by_class(attack_class):
                if not self.satisfies(rule, feats):
                    continue
                dq = self._window(rule, f"ip:{feats.ip}", sighting)
                if len(dq) >= rule.threshold:
                    self._emit(
                        rule,
                        feats,
                        entity=f"ip:{feats.ip}",
                        evidence=[s.ref() for s in dq],
                        entities=Entities(
                            username=self._username_for(feats),
                            source_ips={s.ip for s in dq},
                            user_agents={s.ua for s in dq},
                        ),
                        touched=touched,
                    )

    # -- stream processing ----------------------------------------------------

    def process_available(self, tailer: LogTailer) -> list[AnomalyEvent]:
        """Ingest every complete line past the engine's offset."""
        touched: list[AnomalyEvent] = []
        for record, start, next_offset, raw in tailer.tail_with_spans(self.offset):
            touched.extend(self.ingest(record, offset=start, line=raw))
            with self._lock:
                self.offset = next_offset
        with self._lock:
            self.counters["lines_malformed"] = tailer.malformed_count
            if tailer.consumed_offset > self.offset:
                self.offset = tailer.consumed_offset  # trailing malformed lines
        return touched

    # -- operator surface -----------------------------------------------------

    def snapshot(self) -> dict:
        """Point-in-time situation summary; consistent under the engine lock."""
        with self._lock:
            by_class: Counter = Counter()
            by_severity: Counter = Counter()
            by_status: Counter = Counter()
            ip_counter: Counter = Counter()
            user_counter: Counter = Counter()
            for ev in self.events:
                by_class[ev.attack_class] += 1
                by_severity[ev.severity] += 1
                by_status[ev.status] += 1
                for ip in ev.entities.source_ips:
                    ip_counter[ip] += 1
                if ev.entities.username:
                    user_counter[ev.entities.username] += 1
            return {
                "events": {
                    "total": len(self.events),
                    "by_class": dict(by_class),
                    "by_severity": dict(by_severity),
                    "by_status": dict(by_status),
                },
                "counters": dict(self.counters),
                "top_entities": {
                    "source_ips": ip_counter.most_common(5),
                    "usernames": user_counter.most_common(5),
                },
                "malformed_lines": self.counters["lines_malformed"],
                "last_offset": self.offset,
            }

    def suppress(self, dedup_key: str) -> None:
        with self._lock:
            self._suppressed.add(dedup_key)

    def suppressed_keys(self) -> set[str]:
        with self._lock:
            return set(self._suppressed)

    def get_event(self, event_id: int) -> AnomalyEvent | None:
        with self._lock:
            for ev in self.events:
                if ev.event_id == event_id:
                    return ev
            return None

    def update_rule(self, rule_id: str, **changes) -> AnomalyRule:
        """Applies to subsequently ingested records only."""
        with self._lock:
            rule = self.rules.get(rule_id)
            if rule is None:
                raise KeyError(rule_id)
            updated = rule.patched(**changes)
            self.rules[rule_id] = updated
            return updated

    # -- persistence ------------------------------------------------------------

    def state_dict(self) -> dict:
        """Durable state only; sliding windows restart empty by design."""
        with self._lock:
            return {
                "version": 1,
                "offset": self.offset,
                "counters": dict(self.counters),
                "next_event_id": self._next_event_id,
                "session_bind": {
                    sid: [s.ts.isoformat(), s.ip, s.ua, s.value, s.offset, s.line]
                    for sid, s in self._session_bind.items()
                },
                "pair_bind": {
                    f"{sid}\n{token}": [s.ts.isoformat(), s.ip, s.ua, s.value, s.offset, s.line]
                    for (sid, token), s in self._pair_bind.items()
                },
                "baseline": {user: sorted(pairs) for user, pairs in self._baseline.items()},
                "suppressed": sorted(self._suppressed),
            }

    def load_state(self, state: dict) -> None:
        def sighting(row) -> _Sighting:
            return _Sighting(datetime.fromisoformat(row[0]), row[1], row[2], row[3], row[4], row[5])

        with self._lock:
            self.offset = state["offset"]
            self.counters.update(state.get("counters", {}))
            self._next_event_id = state.get("next_event_id", self._next_event_id)
            self._session_bind = {sid: sighting(row) for sid, row in state.get("session_bind", {}).items()}
            self._pair_bind = {}
            for key, row in state.get("pair_bind", {}).items():
                sid, _, token = key.partition("\n")
                self._pair_bind[(sid, token)] = sighting(row)
            self._baseline = {
                user: {tuple(p) for p in pairs} for user, pairs in state.get("baseline", {}).items()
            }
            self._suppressed = set(state.get("suppressed", ()))

    def adopt_events(self, events: list[AnomalyEvent]) -> None:
        """Rehydrate previously emitted events (from the event store) so that
        dedup keys and live windows stay continuous across a restart."""
        with self._lock:
            self.events = sorted(events, key=lambda e: e.event_id)
            self._live = {}
            for ev in self.events:
                rule_id, entity, _bucket = ev.dedup_key.split("|", 2)
                self._live[(rule_id, entity)] = ev
                if ev.event_id >= self._next_event_id:
                    self._next_event_id = ev.event_id + 1
