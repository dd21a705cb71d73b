"""Acceptance criteria for the primary component.

Each test is one criterion at its stated tolerance; the conftest hook prints
one PASS/FAIL line per criterion. Run with:

    pytest tests/test_acceptance.py -v
"""

from __future__ import annotations

import json
import random
import string
from collections import Counter
from datetime import datetime, timedelta, timezone

import networkx as nx
import pytest

from idsentinel import httpclient
from idsentinel.accesslog import LogRecord, LogTailer, format_record, parse_line
from idsentinel.detect.engine import DetectionEngine, extract_features
from idsentinel.detect.rules import default_rules
from idsentinel.feeds import load_leak_feed, project_blast_radius
from idsentinel.fixturedata import ADMIN_USER, PASSWORDS, USERS

pytestmark = pytest.mark.acceptance

SEED = 42


def _classes(testbed) -> Counter:
    return Counter(e.attack_class for e in testbed.engine.events)


def _api(testbed, method, path, body=None):
    headers = [("Authorization", f"Bearer {testbed.config.api_token}")]
    data = None
    if body is not None:
        headers.append(("Content-Type", "application/json"))
        data = json.dumps(body).encode()
    resp = httpclient.request(testbed.api_http.base_url, method, path, headers=headers, body=data)
    return resp.status, json.loads(resp.body) if resp.body else None


# -- benign purity -------------------------------------------------------------


def test_benign_purity(testbed):
    """up; run benign_baseline --seed 42; report -> zero events, exact."""
    report = testbed.run_scenario("benign_baseline", SEED)
    assert report.completed and report.request_count > 20
    assert testbed.engine.events == []
    result = testbed.report(report)
    for row in result["per_class"].values():
        assert row["false_positives"] == 0
    assert result["events_total"] == 0


# -- token replay (the headline experiment) ---------------------------------------


def test_token_replay_recall_and_evidence(testbed):
    report = testbed.run_scenario("token_replay", SEED)
    result = testbed.report(report)
    assert result["per_class"]["token_replay"]["recall"] == 1.0
    replays = [e for e in testbed.engine.events if e.attack_class == "token_replay"]
    assert replays
    for event in replays:
        assert len(event.entities.source_ips) >= 2
    # the anomaly is displayed: visible through the operator listing
    status, listing = _api(testbed, "GET", "/anomalies?class=token_replay")
    assert status == 200 and listing["total"] >= 1


def test_suspicious_agent_curl(testbed):
    testbed.run_scenario("stolen_token_curl", SEED)
    agents = [e for e in testbed.engine.events if e.attack_class == "suspicious_agent"]
    assert len(agents) >= 1
    for event in agents:
        for item in event.evidence:
            ua = parse_line(item.line).header("User-Agent")
            assert ua.startswith("curl")


# -- failure-pattern rules ------------------------------------------------------

FAILURE_SCENARIOS = [
    ("brute_force", "brute_force"),
    ("credential_stuffing", "credential_stuffing"),
    ("password_spraying", "password_stuffing"),
    ("wordlist", "wordlist"),
]


@pytest.mark.parametrize("scenario,attack_class", FAILURE_SCENARIOS)
def test_failure_pattern_single_deduped_event(testbed_factory, scenario, attack_class):
    testbed = testbed_factory()
    report = testbed.run_scenario(scenario, SEED)
    events = [e for e in testbed.engine.events if e.attack_class == attack_class]
    assert len(events) == 1, f"{scenario}: expected one deduped {attack_class} event"
    result = testbed.report(report)
    assert result["per_class"][attack_class]["recall"] == 1.0


def _burst_counts(log_path, wordlist):
    """Independent recount of each failure pattern's burst size."""
    per_user_failures: Counter = Counter()
    users_by_ip: dict[str, set] = {}
    users_by_digest: dict[str, set] = {}
    wordlist_failures: set = set()
    for record, _ in LogTailer(log_path).tail(0):
        feats = extract_features(record)
        if not feats.is_login:
            continue
        if feats.is_login_failure:
            per_user_failures[feats.login_user] += 1
            if feats.login_user in wordlist:
                wordlist_failures.add(feats.login_user)
        users_by_ip.setdefault(feats.ip, set()).add(feats.login_user)
        if feats.cred_digest:
            users_by_digest.setdefault(feats.cred_digest, set()).add(feats.login_user)
    return {
        "brute_force": max(per_user_failures.values(), default=0),
        "credential_stuffing": max((len(v) for v in users_by_ip.values()), default=0),
        "password_stuffing": max((len(v) for v in users_by_digest.values()), default=0),
        "wordlist": len(wordlist_failures),
    }


@pytest.mark.parametrize("scenario,attack_class", FAILURE_SCENARIOS)
def test_failure_pattern_monotone_thresholds(testbed_factory, scenario, attack_class):
    """Doubling the threshold on the same log: sub-threshold classes go to
    zero, and no class's event count may increase."""
    testbed = testbed_factory()
    testbed.run_scenario(scenario, SEED)
    log_path = testbed.config.log_path
    wordlist = set(open(testbed.config.wordlist_path).read().split())
    leak_index = load_leak_feed(testbed.config.leaks_path)

    def offline_counts(threshold_scale: int) -> Counter:
        rules = default_rules()
        for rule_id in ("brute_force", "credential_stuffing", "password_stuffing", "wordlist"):
            rules[rule_id] = rules[rule_id].patched(
                threshold=rules[rule_id].threshold * threshold_scale
            )
        engine = DetectionEngine(rules, leak_index=leak_index, wordlist=wordlist)
        engine.process_available(LogTailer(log_path))
        return Counter(e.attack_class for e in engine.events)

    base = offline_counts(1)
    doubled = offline_counts(2)
    assert base[attack_class] == 1

    bursts = _burst_counts(log_path, wordlist)
    rules = default_rules()
    rule_id = attack_class  # rule ids equal class names for the built-ins
    if bursts[attack_class] < 2 * rules[rule_id].threshold:
        assert doubled[attack_class] == 0, f"{attack_class} must be sub-threshold when doubled"
    for cls in set(base) | set(doubled):
        assert doubled[cls] <= base[cls], f"{cls} count increased with a higher threshold"


# -- session rules ---------------------------------------------------------------

SESSION_SCENARIOS = [
    ("session_hijack", "session_hijacking"),
    ("mitm_replay", "mitm"),
    ("phishing_login", "phishing"),
]


@pytest.mark.parametrize("scenario,attack_class", SESSION_SCENARIOS)
def test_session_rule_no_cross_class_confusion(testbed_factory, scenario, attack_class):
    testbed = testbed_factory()
    report = testbed.run_scenario(scenario, SEED)
    got = set(_classes(testbed))
    assert got == {attack_class}, f"{scenario}: got {got}"
    result = testbed.report(report)
    assert result["per_class"][attack_class]["recall"] == 1.0
    assert result["confusion"] == []


# -- mixed day -------------------------------------------------------------------


def test_mixed_day_precision_recall(testbed):
    report = testbed.run_scenario("mixed_day", SEED)
    result = testbed.report(report)
    assert result["per_class"], "mixed_day must produce attack classes"
    for attack_class, row in result["per_class"].items():
        assert row["precision"] >= 0.9, (attack_class, row)
        assert row["recall"] >= 0.9, (attack_class, row)
    # any false positive must overlap a labeled attack span
    for fp in result["false_positives"]:
        overlapping = [c for c in fp["overlapping_labels"] if c != "benign"]
        assert overlapping, f"unexplainable false positive: {fp}"


# -- parser round trip -------------------------------------------------------------


def test_parser_round_trip_1000_records():
    rng = random.Random(SEED)
    alphabet = string.ascii_letters + string.digits + "-._~:/?#[]@!$&'()*+,;=%"
    base = datetime(2024, 5, 1, tzinfo=timezone.utc)
    for _ in range(1000):
        headers = tuple(
            (
                "".join(rng.choice(string.ascii_letters + "-") for _ in range(rng.randint(1, 12))),
                "".join(rng.choice(alphabet + "  \t") for _ in range(rng.randint(0, 40))),
            )
            for _ in range(rng.randint(0, 6))
        )
        record = LogRecord(
            timestamp=base + timedelta(milliseconds=rng.randrange(10**10)),
            source_ip=f"{rng.randrange(1, 255)}.{rng.randrange(256)}.{rng.randrange(256)}.{rng.randrange(1, 255)}",
            source_port=rng.randrange(1, 65536),
            method=rng.choice(["GET", "POST", "PATCH"]),
            path_and_query="/" + "".join(rng.choice(alphabet) for _ in range(rng.randint(1, 50))),
            http_version="HTTP/1.1",
            headers=headers,
        )
        line = format_record(record)
        parsed = parse_line(line)
        assert parsed == record
        assert format_record(parsed) == line  # byte-stable reserialization


# -- OAuth protocol correctness ------------------------------------------------------


def test_oauth_correctness(testbed):
    from urllib.parse import parse_qsl, urlencode, urlsplit

    auth = testbed.auth_http.base_url
    now_header = ("X-Testbed-Time", "2024-05-01T10:00:00.000Z")

    # login
    resp = httpclient.request(
        auth,
        "POST",
        "/login",
        headers=[("Content-Type", "application/x-www-form-urlencoded"), now_header,
                 ("User-Agent", "Mozilla/5.0"), ("X-Forwarded-For", "10.0.0.10")],
        body=urlencode({"username": "alice", "password": PASSWORDS["alice"]}).encode(),
    )
    sid = [v for n, v in resp.headers if n.lower() == "set-cookie"][0].split(";")[0]

    # authorization code grant: state echoes byte-exact, code only in the query
    state = "st-Exact.Echo_42~x"
    query = urlencode(
        {
            "client_id": testbed.client_code.client_id,
            "redirect_uri": testbed.client_code.redirect_uri,
            "response_type": "code",
            "state": state,
        }
    )
    resp = httpclient.request(
        auth, "GET", f"/authorize?{query}",
        headers=[("Cookie", sid), now_header, ("User-Agent", "Mozilla/5.0")],
    )
    location = [v for n, v in resp.headers if n.lower() == "location"][0]
    parts = urlsplit(location)
    q = dict(parse_qsl(parts.query, keep_blank_values=True))
    assert q["state"] == state  # byte-exact echo
    assert parts.fragment == ""
    code = q["code"]

    # exchange once: ok; exchange twice: rejected
    def exchange():
        return httpclient.request(
            auth, "POST", "/token",
            headers=[("Content-Type", "application/x-www-form-urlencoded"), now_header],
            body=urlencode(
                {
                    "grant_type": "authorization_code",
                    "code": code,
                    "redirect_uri": testbed.client_code.redirect_uri,
                    "client_id": testbed.client_code.client_id,
                    "client_secret": testbed.client_code.client_secret,
                }
            ).encode(),
        )

    first, second = exchange(), exchange()
    assert first.status == 200
    body = first.json()
    assert body["token_type"] == "Bearer" and len(body["access_token"]) == 42
    assert second.status == 400

    # implicit grant: token appears in the fragment only
    query = urlencode(
        {
            "client_id": testbed.client_implicit.client_id,
            "redirect_uri": testbed.client_implicit.redirect_uri,
            "response_type": "token",
            "state": state,
        }
    )
    resp = httpclient.request(
        auth, "GET", f"/authorize?{query}",
        headers=[("Cookie", sid), now_header, ("User-Agent", "Mozilla/5.0")],
    )
    location = [v for n, v in resp.headers if n.lower() == "location"][0]
    parts = urlsplit(location)
    frag = dict(parse_qsl(parts.fragment))
    assert "access_token" in frag and frag["state"] == state
    assert "access_token" not in parts.query

    # no password material in the full mixed_day log
    testbed.run_scenario("mixed_day", SEED)
    log_text = open(testbed.config.log_path, encoding="utf-8").read()
    assert "access_token=" not in log_text  # tokens never travel in query strings
    for username, password, _ in USERS:
        assert password not in log_text
        stored = testbed.store.get_user(username).password_digest
        assert stored not in log_text
        _scheme, _iters, salt, hexdigest = stored.split("$")
        assert hexdigest not in log_text
        assert salt not in log_text


# -- resume safety ----------------------------------------------------------------


def test_resume_safety_split_equals_single_pass(testbed):
    """Any split at an inter-window offset reproduces the dedup_key set."""
    testbed.run_scenario("mixed_day", SEED)
    log_path = testbed.config.log_path
    wordlist = set(open(testbed.config.wordlist_path).read().split())
    leak_index = load_leak_feed(testbed.config.leaks_path)

    def fresh_engine():
        return DetectionEngine(default_rules(), leak_index=leak_index, wordlist=wordlist)

    single = fresh_engine()
    single.process_available(LogTailer(log_path))
    expected = sorted(e.dedup_key for e in single.events)
    assert expected, "mixed_day must raise events"

    # inter-window offsets: line starts whose gap to the previous record
    # exceeds every sliding window (max 300 s)
    boundaries = []
    previous_ts = None
    for record, start, _next, _raw in LogTailer(log_path).tail_with_spans(0):
        if previous_ts is not None:
            gap = (record.timestamp - previous_ts).total_seconds()
            if gap >= 350:
                boundaries.append(start)
        previous_ts = record.timestamp
    assert len(boundaries) >= 3, "mixed_day must contain quiet gaps"

    for boundary in boundaries:
        first = fresh_engine()
        for record, start, next_offset, raw in LogTailer(log_path).tail_with_spans(0):
            if start >= boundary:
                break
            first.ingest(record, offset=start, line=raw)
            first.offset = next_offset
        second = fresh_engine()
        second.load_state(first.state_dict())
        second.adopt_events(list(first.events))
        for record, start, next_offset, raw in LogTailer(log_path).tail_with_spans(boundary):
            second.ingest(record, offset=start, line=raw)
            second.offset = next_offset
        got = sorted(e.dedup_key for e in second.events)
        assert got == expected, f"split at offset {boundary} diverged"


# -- projection --------------------------------------------------------------------


def test_projection_blast_radius_admin_hits_idms(testbed):
    testbed.run_scenario("brute_force", SEED)  # targets the admin account
    event = [e for e in testbed.engine.events if e.attack_class == "brute_force"][0]
    assert event.entities.username == ADMIN_USER

    projection = project_blast_radius(event, testbed.graph)
    idms_systems = {name for name, info in testbed.graph.systems.items() if info.idms}
    assert idms_systems & projection.reachable_systems
    assert projection.severity_uplift == "high"

    # independent transitive-closure oracle
    g = nx.DiGraph()
    for user, roles in testbed.graph.users.items():
        for role in roles:
            g.add_edge(("user", user), ("role", role))
    for role, perms in testbed.graph.roles.items():
        for perm in perms:
            g.add_edge(("role", role), ("perm", perm))
    for perm, systems in testbed.graph.permissions.items():
        for system in systems:
            g.add_edge(("perm", perm), ("system", system))
    oracle = {
        name for kind, name in nx.descendants(g, ("user", ADMIN_USER)) if kind == "system"
    }
    assert projection.reachable_systems == oracle

    # the operator surface serves the same projection
    status, body = _api(testbed, "GET", f"/projection/{event.event_id}")
    assert status == 200
    assert set(body["reachable_systems"]) == oracle
    assert body["severity_uplift"] == "high"


# -- suppression -------------------------------------------------------------------


def test_suppression_after_mark_benign(testbed):
    testbed.run_scenario("token_replay", SEED)
    replay = [e for e in testbed.engine.events if e.attack_class == "token_replay"][0]
    counts_before = _classes(testbed)
    ids_before = {e.event_id for e in testbed.engine.events}

    status, _ = _api(
        testbed,
        "POST",
        f"/anomalies/{replay.event_id}/triage",
        {"action": "mark_benign", "actor": "operator"},
    )
    assert status == 200

    testbed.run_scenario("token_replay", SEED)  # identical rerun
    new_events = [e for e in testbed.engine.events if e.event_id not in ids_before]
    assert all(e.dedup_key != replay.dedup_key for e in new_events)
    assert not [e for e in new_events if e.attack_class == "token_replay"]
    assert _classes(testbed) == counts_before  # unchanged counts elsewhere
    assert testbed.engine.counters["events_suppressed"] > 0
