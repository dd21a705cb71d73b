"""Canonical fixture data and the writer that materializes fixtures/.

One module owns the test population so the traffic scripts, the leak feed,
and the context graph can never drift apart: leaks.jsonl digests are derived
from the same plaintexts the scenarios type into login forms.
"""

from __future__ import annotations

import json
from pathlib import Path

from .detect.rules import default_rules, dump_rules
from .feeds import candidate_digest

# username, password, email; the first seven drive benign traffic, heidi and
# ivan have currently-leaked credentials, judy holds the admin role
USERS: list[tuple[str, str, str]] = [
    ("alice", "correct-horse-battery", "alice@example.test"),
    ("bob", "hunter-green-2", "bob@example.test"),
    ("carol", "carillon-9-bells", "carol@example.test"),
    ("dave", "davenport-sofa-77", "dave@example.test"),
    ("erin", "erin-go-bragh-11", "erin@example.test"),
    ("frank", "frankly-my-dear-12", "frank@example.test"),
    ("grace", "grace-hopper-1906", "grace@example.test"),
    ("heidi", "heidi-alps-2024", "heidi@example.test"),
    ("ivan", "ivan-terrible-1530", "ivan@example.test"),
    ("judy", "judy-garland-0z", "judy@example.test"),
]

PASSWORDS = {u: p for u, p, _ in USERS}
BENIGN_USERS = [u for u, _, _ in USERS[:7]]

# pairs whose plaintext is current (credential stuffing hits)
LEAKED_CURRENT = [("heidi", PASSWORDS["heidi"]), ("ivan", PASSWORDS["ivan"])]
# stale leaks: real users, rotated passwords (misses)
LEAKED_STALE = [("erin", "summer2023!"), ("frank", "autumn2023!")]
# accounts that do not exist here at all
LEAKED_EXTERNAL = [
    ("mallory", "m4llory-pass"),
    ("oscar", "0scar-pass"),
    ("peggy", "p3ggy-pass"),
    ("sybil", "syb1l-pass"),
    ("trent", "tr3nt-pass"),
    ("victor", "v1ctor-pass"),
    ("walter", "w4lter-pass"),
    ("wendy", "w3ndy-pass"),
    ("xavier", "x4vier-pass"),
    ("yolanda", "y0landa-pass"),
    ("zach", "z4ch-pass"),
]

LEAK_PAIRS = LEAKED_CURRENT + LEAKED_STALE + LEAKED_EXTERNAL  # 15 pairs

WORDLIST = [u for u, _, _ in USERS] + [
    "admin",
    "root",
    "administrator",
    "guest",
    "test",
    "info",
    "postmaster",
    "webmaster",
    "oracle",
    "backup",
]  # 20 entries

CONTEXT_YAML = """\
# role concept and network plan of the observed organization
users:
  alice: [staff]
  bob: [staff]
  carol: [staff, crm_agent]
  dave: [staff]
  erin: [crm_agent]
  frank: [staff]
  grace: [staff]
  heidi: [staff]
  ivan: [crm_agent]
  judy: [staff, it_admin]
roles:
  staff: [read_wiki, use_mail]
  crm_agent: [read_wiki, use_mail, use_crm]
  it_admin: [administer_idp, use_crm, use_mail]
permissions:
  read_wiki: [wiki]
  use_mail: [mail]
  use_crm: [crm]
  administer_idp: [idp, directory]
systems:
  wiki: {zone: office}
  mail: {zone: dmz}
  crm: {zone: office}
  idp: {zone: core, idms: true}
  directory: {zone: core, idms: true}
"""

ADMIN_USER = "judy"

# stable per-user source identity for benign traffic
BROWSER_AGENTS = [
    "Mozilla/5.0 (X11; Linux x86_64; rv:115.0) Gecko/20100101 Firefox/115.0",
    "Mozilla/5.0 (Windows NT 10.0; Win64; x64) AppleWebKit/537.36 Chrome/120.0 Safari/537.36",
    "Mozilla/5.0 (Macintosh; Intel Mac OS X 13_5) AppleWebKit/605.1.15 Version/16.5 Safari/605.1.15",
    "Mozilla/5.0 (Windows NT 10.0; Win64; x64) AppleWebKit/537.36 Chrome/120.0 Edg/120.0",
]


def home_ip(username: str) -> str:
    index = [u for u, _, _ in USERS].index(username)
    return f"10.0.0.{10 + index}"


def home_agent(username: str) -> str:
    index = [u for u, _, _ in USERS].index(username)
    return BROWSER_AGENTS[index % len(BROWSER_AGENTS)]


def write_fixtures(target_dir: str | Path) -> list[Path]:
    """Materialize users.jsonl, leaks.jsonl, wordlist.txt, context.yaml, rules.json."""
    target = Path(target_dir)
    target.mkdir(parents=True, exist_ok=True)
    written = []

    users_path = target / "users.jsonl"
    with open(users_path, "w", encoding="utf-8") as fh:
        for username, password, email in USERS:
            fh.write(json.dumps({"username": username, "password": password, "email": email}) + "\n")
    written.append(users_path)

    leaks_path = target / "leaks.jsonl"
    with open(leaks_path, "w", encoding="utf-8") as fh:
        for username, password in LEAK_PAIRS:
            fh.write(
                json.dumps({"username": username, "password_digest": candidate_digest(password)})
                + "\n"
            )
    written.append(leaks_path)

    wordlist_path = target / "wordlist.txt"
    wordlist_path.write_text("\n".join(WORDLIST) + "\n", encoding="utf-8")
    written.append(wordlist_path)

    context_path = target / "context.yaml"
    context_path.write_text(CONTEXT_YAML, encoding="utf-8")
    written.append(context_path)

    rules_path = target / "rules.json"
    dump_rules(default_rules(), rules_path)
    written.append(rules_path)

    return written


def load_users(path: str | Path) -> list[dict]:
    users = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                users.append(json.loads(line))
    return users
