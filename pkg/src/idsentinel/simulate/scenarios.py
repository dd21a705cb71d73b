"""Scripted traffic: the scenario catalog and its step builders.

Every scenario is a deterministic function of (name, seed). Steps carry a
virtual time offset; the runner injects it so time-window rules can be
exercised in milliseconds of wall clock. Source addresses and user agents
are fixed per user (benign) or per attack, never seed-dependent, so that
login baselines and dedup keys stay stable across runs.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .. import fixturedata as fx
from ..detect.rules import (
    CLASS_BRUTE_FORCE,
    CLASS_CREDENTIAL_STUFFING,
    CLASS_MITM,
    CLASS_PASSWORD_STUFFING,
    CLASS_PHISHING,
    CLASS_SESSION_HIJACKING,
    CLASS_SUSPICIOUS_AGENT,
    CLASS_TOKEN_REPLAY,
    CLASS_WORDLIST,
    CLASS_XSS_PROBE,
)

BENIGN = "benign"

CURL_AGENT = "curl/8.4.0"
ATTACKER_AGENTS = {
    "windows": fx.BROWSER_AGENTS[1],
    "safari": fx.BROWSER_AGENTS[2],
    "edge": fx.BROWSER_AGENTS[3],
    "iphone": "Mozilla/5.0 (iPhone; CPU iPhone OS 17_0 like Mac OS X) Version/17.0 Mobile Safari/604.1",
}


@dataclass(frozen=True)
class Step:
    at_ms: int
    action: str
    label: str = BENIGN
    entity: str = ""
    params: dict = field(default_factory=dict)


def _login(t, user, *, password=None, ip=None, ua=None, expect="success", label=BENIGN, entity=""):
    return Step(
        at_ms=t,
        action="login",
        label=label,
        entity=entity or (user if label != BENIGN else ""),
        params={
            "user": user,
            "password": password if password is not None else fx.PASSWORDS.get(user, ""),
            "ip": ip or fx.home_ip(user),
            "ua": ua or fx.home_agent(user),
            "expect": expect,
        },
    )


def _authorize(t, user, *, client, response_type, state, ip=None, ua=None, sid_ref=None,
               label=BENIGN, entity=""):
    return Step(
        at_ms=t,
        action="authorize",
        label=label,
        entity=entity,
        params={
            "user": user,
            "client": client,
            "response_type": response_type,
            "state": state,
            "ip": ip or fx.home_ip(user),
            "ua": ua or fx.home_agent(user),
            "sid_ref": sid_ref or f"sid:{user}",
        },
    )


def _cb(t, user, *, client):
    return Step(
        at_ms=t,
        action="cb",
        params={"user": user, "client": client, "ip": fx.home_ip(user), "ua": fx.home_agent(user)},
    )


def _profile(t, user, *, client):
    return Step(
        at_ms=t,
        action="profile",
        params={"user": user, "client": client, "ip": fx.home_ip(user), "ua": fx.home_agent(user)},
    )


def _userinfo(t, *, token_ref, ip, ua, sid_ref=None, label=BENIGN, entity=""):
    return Step(
        at_ms=t,
        action="userinfo",
        label=label,
        entity=entity,
        params={"token_ref": token_ref, "ip": ip, "ua": ua, "sid_ref": sid_ref},
    )


def _code_flow(t, user, rng, spacing=1000):
    """login already done: authorize -> cb -> profile through the code client."""
    state = f"st{rng.randrange(16**6):06x}"
    return [
        _authorize(t, user, client="code", response_type="code", state=state),
        _cb(t + spacing, user, client="code"),
        _profile(t + 2 * spacing, user, client="code"),
    ]


def _implicit_flow(t, user, rng, spacing=1000):
    """authorize -> fragment page -> the user agent calls the resource server."""
    state = f"st{rng.randrange(16**6):06x}"
    return [
        _authorize(t, user, client="implicit", response_type="token", state=state),
        _cb(t + spacing, user, client="implicit"),
        _userinfo(
            t + 2 * spacing,
            token_ref=f"token:{user}",
            ip=fx.home_ip(user),
            ua=fx.home_agent(user),
            sid_ref=f"sid:{user}",
        ),
    ]


# -- scenario builders -------------------------------------------------------


def benign_baseline(seed: int) -> list[Step]:
    rng = random.Random(seed)
    steps = [
        _login(0, "alice"),
        *_code_flow(1_000, "alice", rng),
        _login(5_000, "bob"),
        *_implicit_flow(6_000, "bob", rng),
        _userinfo(10_000, token_ref="token:bob", ip=fx.home_ip("bob"), ua=fx.home_agent("bob"),
                  sid_ref="sid:bob"),
        _login(12_000, "carol"),
        *_code_flow(13_000, "carol", rng),
        _login(18_000, "dave"),
        _login(20_000, "erin", password="erin-go-brag-11", expect="failure"),  # one typo
        _login(21_000, "erin"),
        _login(23_000, "frank"),
        *_implicit_flow(24_000, "frank", rng),
        _login(29_000, "grace"),
        Step(
            at_ms=30_000,
            action="register_client",
            params={
                "user": "alice",
                "redirect_uris": ["https://printer.office.test/cb"],
                "ip": fx.home_ip("alice"),
                "ua": fx.home_agent("alice"),
            },
        ),
        _profile(31_000, "alice", client="code"),
        _userinfo(33_000, token_ref="token:bob", ip=fx.home_ip("bob"), ua=fx.home_agent("bob"),
                  sid_ref="sid:bob"),
    ]
    return steps


def token_replay(seed: int) -> list[Step]:
    rng = random.Random(seed)
    attacker_ip = "203.0.113.66"
    steps = [
        _login(0, "carol"),
        *_code_flow(1_000, "carol", rng),  # the client makes one legitimate userinfo call
        _userinfo(8_000, token_ref="log:last_bearer", ip=attacker_ip, ua=CURL_AGENT,
                  label=CLASS_TOKEN_REPLAY, entity="$token"),
        _userinfo(10_000, token_ref="log:last_bearer", ip=attacker_ip, ua=CURL_AGENT,
                  label=CLASS_TOKEN_REPLAY, entity="$token"),
    ]
    return steps


def stolen_token_curl(seed: int) -> list[Step]:
    rng = random.Random(seed)
    steps = [
        _login(0, "dave"),
        *_implicit_flow(1_000, "dave", rng),
        # exfiltration tool on the victim host: same address, curl agent
        _userinfo(8_000, token_ref="token:dave", ip=fx.home_ip("dave"), ua=CURL_AGENT,
                  label=CLASS_SUSPICIOUS_AGENT, entity="$token"),
        _userinfo(10_000, token_ref="token:dave", ip=fx.home_ip("dave"), ua=CURL_AGENT,
                  label=CLASS_SUSPICIOUS_AGENT, entity="$token"),
    ]
    return steps


def brute_force(seed: int) -> list[Step]:
    rng = random.Random(seed)
    ip = "198.51.100.21"
    ua = ATTACKER_AGENTS["windows"]
    return [
        _login(i * 3_000, fx.ADMIN_USER, password=f"guess-{rng.randrange(10**6):06d}",
               ip=ip, ua=ua, expect="failure", label=CLASS_BRUTE_FORCE)
        for i in range(10)
    ]


def wordlist(seed: int) -> list[Step]:
    rng = random.Random(seed)
    ips = ["203.0.113.31", "203.0.113.32", "203.0.113.33"]
    agents = [ATTACKER_AGENTS["windows"], ATTACKER_AGENTS["safari"], ATTACKER_AGENTS["edge"]]
    # 13 distinct wordlist usernames fail; seven get a second password try
    first_round = [
        ("alice", 0), ("dave", 1), ("grace", 2),
        ("bob", 0), ("erin", 1), ("heidi", 2),
        ("carol", 0), ("frank", 1), ("ivan", 2),
        ("admin", 0), ("root", 1), ("guest", 2), ("test", 0),
    ]
    retries = [("alice", 0), ("dave", 1), ("grace", 2), ("bob", 0), ("erin", 1), ("carol", 0), ("frank", 1)]
    steps = []
    t = 0
    for user, ip_index in first_round:
        steps.append(_login(t, user, password=f"{user}{rng.randrange(1000):03d}",
                            ip=ips[ip_index], ua=agents[ip_index], expect="failure",
                            label=CLASS_WORDLIST))
        t += 8_000
    for user, ip_index in retries:
        steps.append(_login(t, user, password=f"{user}-{rng.randrange(1000):03d}x",
                            ip=ips[ip_index], ua=agents[ip_index], expect="failure",
                            label=CLASS_WORDLIST))
        t += 8_000
    return steps


def credential_stuffing(seed: int) -> list[Step]:
    ip = "198.51.100.60"
    ua = ATTACKER_AGENTS["windows"]
    pairs = (fx.LEAKED_CURRENT + fx.LEAKED_STALE + fx.LEAKED_EXTERNAL[:8])  # 12 distinct usernames
    steps = []
    for i, (user, password) in enumerate(pairs):
        expect = "success" if (user, password) in fx.LEAKED_CURRENT else "failure"
        steps.append(_login(i * 4_000, user, password=password, ip=ip, ua=ua,
                            expect=expect, label=CLASS_CREDENTIAL_STUFFING))
    return steps


def password_spraying(seed: int) -> list[Step]:
    password = "Winter2024!"
    users = [u for u, _, _ in fx.USERS[:9]] + ["jsmith", "mmeyer", "kchen"]  # 12 usernames
    ips = ["198.51.100.71", "198.51.100.72"]
    agents = [ATTACKER_AGENTS["windows"], ATTACKER_AGENTS["edge"]]
    steps = []
    for i, user in enumerate(users):
        half = 0 if i < 6 else 1
        steps.append(_login(i * 10_000, user, password=password, ip=ips[half], ua=agents[half],
                            expect="failure", label=CLASS_PASSWORD_STUFFING))
    return steps


def session_hijack(seed: int) -> list[Step]:
    rng = random.Random(seed)
    attacker_ip = "203.0.113.50"
    attacker_ua = ATTACKER_AGENTS["safari"]
    state = f"st{rng.randrange(16**6):06x}"
    return [
        _login(0, "erin"),
        *_code_flow(1_000, "erin", rng),
        # stolen cookie, attacker's own client: new address and new agent
        _authorize(10_000, "erin", client="code", response_type="code", state=state,
                   ip=attacker_ip, ua=attacker_ua, sid_ref="sid:erin",
                   label=CLASS_SESSION_HIJACKING, entity="erin"),
        _authorize(12_000, "erin", client="code", response_type="code", state=state,
                   ip=attacker_ip, ua=attacker_ua, sid_ref="sid:erin",
                   label=CLASS_SESSION_HIJACKING, entity="erin"),
    ]


def mitm_replay(seed: int) -> list[Step]:
    rng = random.Random(seed)
    attacker_ip = "203.0.113.77"
    steps = [
        _login(0, "frank"),
        *_implicit_flow(1_000, "frank", rng),
        # captured request bytes replayed verbatim: cookie+token, agent unchanged
        _userinfo(10_000, token_ref="token:frank", ip=attacker_ip, ua=fx.home_agent("frank"),
                  sid_ref="sid:frank", label=CLASS_MITM, entity="frank"),
        _userinfo(12_000, token_ref="token:frank", ip=attacker_ip, ua=fx.home_agent("frank"),
                  sid_ref="sid:frank", label=CLASS_MITM, entity="frank"),
    ]
    return steps


def phishing_login(seed: int) -> list[Step]:
    return [
        _login(0, "grace"),
        _login(6_000, "grace", ip="198.51.100.90", ua=ATTACKER_AGENTS["iphone"],
               label=CLASS_PHISHING, entity="grace"),
    ]


def xss_probe(seed: int) -> list[Step]:
    ip = "198.51.100.99"
    ua = ATTACKER_AGENTS["windows"]
    return [
        Step(at_ms=0, action="raw", label=CLASS_XSS_PROBE, entity=ip,
             params={"base": "auth", "method": "GET",
                     "path": "/login?next=%2Fprofile&q=<script>alert(1)</script>",
                     "ip": ip, "ua": ua}),
        Step(at_ms=2_000, action="raw", label=CLASS_XSS_PROBE, entity=ip,
             params={"base": "auth", "method": "GET",
                     "path": "/authorize?client_id=x&state=<script>alert(1)</script>",
                     "ip": ip, "ua": ua}),
        Step(at_ms=4_000, action="raw", label=CLASS_XSS_PROBE, entity=ip,
             params={"base": "resource", "method": "GET", "path": "/api/userinfo",
                     "headers": [["X-Search", "javascript:alert(1)"]],
                     "ip": ip, "ua": ua}),
    ]


def mixed_day(seed: int) -> list[Step]:
    rng = random.Random(seed)
    steps: list[Step] = []

    # morning baseline
    steps += [
        _login(0, "alice"),
        *_code_flow(1_000, "alice", rng),
        _login(5_000, "bob"),
        *_implicit_flow(6_000, "bob", rng),
        _userinfo(10_000, token_ref="token:bob", ip=fx.home_ip("bob"), ua=fx.home_agent("bob"),
                  sid_ref="sid:bob"),
    ]

    # brute-force burst with benign traffic interleaved
    base = 500_000
    brute_ip, brute_ua = "198.51.100.21", ATTACKER_AGENTS["windows"]
    for i in range(10):
        steps.append(_login(base + i * 3_000, fx.ADMIN_USER,
                            password=f"guess-{rng.randrange(10**6):06d}",
                            ip=brute_ip, ua=brute_ua, expect="failure",
                            label=CLASS_BRUTE_FORCE))
    steps.append(_login(base + 5_500, "carol"))
    steps += _code_flow(base + 13_500, "carol", rng)

    # afternoon: benign implicit use, then a session hijack
    base = 1_100_000
    steps += [
        _login(base, "dave"),
        *_implicit_flow(base + 1_000, "dave", rng),
        _login(base + 6_000, "erin"),
        *_code_flow(base + 7_000, "erin", rng),
    ]
    state = f"st{rng.randrange(16**6):06x}"
    for offset in (30_000, 35_000):
        steps.append(_authorize(base + offset, "erin", client="code", response_type="code",
                                state=state, ip="203.0.113.50", ua=ATTACKER_AGENTS["safari"],
                                sid_ref="sid:erin", label=CLASS_SESSION_HIJACKING, entity="erin"))

    # evening: token replay from a second browser profile, then benign tail
    base = 1_700_000
    steps += [
        _login(base, "frank"),
        *_code_flow(base + 1_000, "frank", rng),
    ]
    for offset in (20_000, 25_000):
        steps.append(_userinfo(base + offset, token_ref="log:last_bearer", ip="203.0.113.88",
                               ua=ATTACKER_AGENTS["edge"], label=CLASS_TOKEN_REPLAY,
                               entity="$token"))
    steps.append(_login(base + 30_000, "grace"))
    return steps


CATALOG = {
    "benign_baseline": ("regular logins and both grant flows, no attacks", benign_baseline),
    "token_replay": ("code-grant token replayed from a foreign address", token_replay),
    "stolen_token_curl": ("stolen token driven through curl on the victim host", stolen_token_curl),
    "brute_force": ("many passwords against one username", brute_force),
    "wordlist": ("failed logins walking the bundled username list", wordlist),
    "credential_stuffing": ("leaked username:password pairs, mixed hit and miss", credential_stuffing),
    "password_spraying": ("one password sprayed across many usernames", password_spraying),
    "session_hijack": ("live session cookie reused from a new address and agent", session_hijack),
    "mitm_replay": ("captured cookie+token replayed verbatim from a new address", mitm_replay),
    "phishing_login": ("correct credentials from a never-seen address/agent pair", phishing_login),
    "xss_probe": ("script-injection payloads in request parameters", xss_probe),
    "mixed_day": ("benign day with brute force, session hijack, and token replay", mixed_day),
}

# the anomaly class each attack scenario is expected to raise
EXPECTED_CLASS = {
    "token_replay": CLASS_TOKEN_REPLAY,
    "stolen_token_curl": CLASS_SUSPICIOUS_AGENT,
    "brute_force": CLASS_BRUTE_FORCE,
    "wordlist": CLASS_WORDLIST,
    "credential_stuffing": CLASS_CREDENTIAL_STUFFING,
    "password_spraying": CLASS_PASSWORD_STUFFING,
    "session_hijack": CLASS_SESSION_HIJACKING,
    "mitm_replay": CLASS_MITM,
    "phishing_login": CLASS_PHISHING,
    "xss_probe": CLASS_XSS_PROBE,
}


def catalog() -> list[dict]:
    return [{"name": name, "description": desc} for name, (desc, _) in CATALOG.items()]


def expected_class(name: str) -> str | None:
    return EXPECTED_CLASS.get(name)


def build_steps(name: str, seed: int) -> list[Step]:
    if name not in CATALOG:
        raise KeyError(f"unknown scenario: {name!r}")
    _desc, builder = CATALOG[name]
    # interleaved scripts run in virtual-time order (stable for equal offsets)
    return sorted(builder(seed), key=lambda s: s.at_ms)
