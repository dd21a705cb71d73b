"""Detection rules: one per attack class, thresholds and windows as config.

The defaults are starting points for a desk-scale deployment, not constants;
rules.json overrides them and PATCH /rules tunes them live.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

CLASS_PASSWORD_STUFFING = "password_stuffing"
CLASS_WORDLIST = "wordlist"
CLASS_CREDENTIAL_STUFFING = "credential_stuffing"
CLASS_BRUTE_FORCE = "brute_force"
CLASS_SESSION_HIJACKING = "session_hijacking"
CLASS_PHISHING = "phishing"
CLASS_MITM = "mitm"
CLASS_TOKEN_REPLAY = "token_replay"
CLASS_SUSPICIOUS_AGENT = "suspicious_agent"
CLASS_XSS_PROBE = "xss_probe"
CLASS_LEAKED_CREDENTIAL = "leaked_credential"

ATTACK_CLASSES = (
    CLASS_PASSWORD_STUFFING,
    CLASS_WORDLIST,
    CLASS_CREDENTIAL_STUFFING,
    CLASS_BRUTE_FORCE,
    CLASS_SESSION_HIJACKING,
    CLASS_PHISHING,
    CLASS_MITM,
    CLASS_TOKEN_REPLAY,
    CLASS_SUSPICIOUS_AGENT,
    CLASS_XSS_PROBE,
    CLASS_LEAKED_CREDENTIAL,
)

SEVERITIES = ("low", "medium", "high")

DEFAULT_AGENT_DENYLIST = ["curl", "wget", "python-requests"]
DEFAULT_XSS_SIGNATURES = ["<script", "javascript:", "onerror="]


@dataclass(frozen=True)
class AnomalyRule:
    rule_id: str
    attack_class: str
    description: str
    required_characteristics: tuple[str, ...]
    threshold: int = 1
    window_seconds: float = 60.0
    severity: str = "medium"
    enabled: bool = True
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.threshold < 1:
            raise ValueError(f"{self.rule_id}: threshold must be >= 1")
        if self.window_seconds <= 0:
            raise ValueError(f"{self.rule_id}: window_seconds must be > 0")
        if self.severity not in SEVERITIES:
            raise ValueError(f"{self.rule_id}: severity must be one of {SEVERITIES}")
        if self.attack_class not in ATTACK_CLASSES:
            raise ValueError(f"{self.rule_id}: unknown attack class {self.attack_class!r}")

    def to_json(self) -> dict:
        return {
            "rule_id": self.rule_id,
            "attack_class": self.attack_class,
            "description": self.description,
            "required_characteristics": list(self.required_characteristics),
            "threshold": self.threshold,
            "window_seconds": self.window_seconds,
            "severity": self.severity,
            "enabled": self.enabled,
            "params": self.params,
        }

    def patched(self, **changes) -> "AnomalyRule":
        allowed = {"threshold", "window_seconds", "enabled", "severity", "params"}
        bad = set(changes) - allowed
        if bad:
            raise ValueError(f"{self.rule_id}: fields not tunable: {sorted(bad)}")
        return replace(self, **changes)


def default_rules() -> dict[str, AnomalyRule]:
    rules = [
        AnomalyRule(
            rule_id="brute_force",
            attack_class=CLASS_BRUTE_FORCE,
            description="repeated login failures against one username",
            required_characteristics=("login_failure",),
            threshold=5,
            window_seconds=60,
            severity="high",
        ),
        AnomalyRule(
            rule_id="credential_stuffing",
            attack_class=CLASS_CREDENTIAL_STUFFING,
            description="many distinct usernames attempted from one address",
            required_characteristics=("login_attempt",),
            threshold=10,
            window_seconds=60,
            severity="high",
        ),
        AnomalyRule(
            rule_id="password_stuffing",
            attack_class=CLASS_PASSWORD_STUFFING,
            description="one password tried across many usernames",
            required_characteristics=("login_attempt", "cred_digest"),
            threshold=8,
            window_seconds=300,
            severity="high",
        ),
        AnomalyRule(
            rule_id="wordlist",
            attack_class=CLASS_WORDLIST,
            description="failed logins walking a known username list",
            required_characteristics=("login_failure", "wordlist_username"),
            threshold=10,
            window_seconds=300,
            severity="medium",
        ),
        AnomalyRule(
            rule_id="token_replay",
            attack_class=CLASS_TOKEN_REPLAY,
            description="one access token used from multiple addresses or agents",
            required_characteristics=("bearer_token",),
            threshold=2,
            window_seconds=3600,
            severity="high",
        ),
        AnomalyRule(
            rule_id="session_hijacking",
            attack_class=CLASS_SESSION_HIJACKING,
            description="existing session reused with a new address and a new agent",
            required_characteristics=("session_cookie",),
            threshold=1,
            window_seconds=3600,
            severity="high",
        ),
        AnomalyRule(
            rule_id="mitm",
            attack_class=CLASS_MITM,
            description="session-bound cookie and token replayed verbatim from a new address",
            required_characteristics=("session_cookie", "bearer_token"),
            threshold=1,
            window_seconds=3600,
            severity="high",
        ),
        AnomalyRule(
            rule_id="phishing",
            attack_class=CLASS_PHISHING,
            description="successful login from an address/agent pair unseen for that user",
            required_characteristics=("login_success",),
            threshold=1,
            window_seconds=3600,
            severity="high",
        ),
        AnomalyRule(
            rule_id="suspicious_agent",
            attack_class=CLASS_SUSPICIOUS_AGENT,
            description="request from a denylisted user agent",
            required_characteristics=("denylisted_agent",),
            threshold=1,
            window_seconds=3600,
            severity="low",
            params={"denylist": list(DEFAULT_AGENT_DENYLIST)},
        ),
        AnomalyRule(
            rule_id="xss_probe",
            attack_class=CLASS_XSS_PROBE,
            description="script-injection signature in a request",
            required_characteristics=("xss_signature",),
            threshold=1,
            window_seconds=3600,
            severity="medium",
            params={"signatures": list(DEFAULT_XSS_SIGNATURES)},
        ),
        AnomalyRule(
            rule_id="leaked_credential",
            attack_class=CLASS_LEAKED_CREDENTIAL,
            description="login attempt with a credential pair present in the leak feed",
            required_characteristics=("login_attempt", "cred_digest"),
            threshold=1,
            window_seconds=3600,
            severity="medium",
        ),
    ]
    return {rule.rule_id: rule for rule in rules}


def load_rules(path: str | Path) -> dict[str, AnomalyRule]:
    """Defaults overlaid with the entries of a rules.json file."""
    rules = default_rules()
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(doc, list):
        raise ValueError(f"{path}: rules file must hold a JSON array")
    for entry in doc:
        rule_id = entry.get("rule_id")
        if not rule_id:
            raise ValueError(f"{path}: every rule needs a rule_id")
        base = rules.get(rule_id)
        if base is None:
            rules[rule_id] = AnomalyRule(
                rule_id=rule_id,
                attack_class=entry["attack_class"],
                description=entry.get("description", ""),
                required_characteristics=tuple(entry.get("required_characteristics", ())),
                threshold=int(entry.get("threshold", 1)),
                window_seconds=float(entry.get("window_seconds", 60)),
                severity=entry.get("severity", "medium"),
                enabled=bool(entry.get("enabled", True)),
                params=entry.get("params", {}),
            )
        else:
            changes = {
                k: entry[k]
                for k in ("threshold", "window_seconds", "enabled", "severity", "params")
                if k in entry
            }
            rules[rule_id] = base.patched(**changes)
    return rules


def dump_rules(rules: dict[str, AnomalyRule], path: str | Path) -> None:
    doc = [rule.to_json() for rule in rules.values()]
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
