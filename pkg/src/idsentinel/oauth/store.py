"""Identity, client, and credential store for the minimal OAuth deployment.

All random material (ids, codes, tokens) comes from one seeded RNG so a run
is reproducible end to end. Opaque values are 42-character strings over
A-Za-z0-9. Code consumption is an atomic test-and-set under the store lock.
"""

from __future__ import annotations

import hashlib
import hmac
import random
import string
import threading
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta
from urllib.parse import urlsplit

OPAQUE_ALPHABET = string.ascii_uppercase + string.ascii_lowercase + string.digits
OPAQUE_LENGTH = 42
PBKDF2_ITERATIONS = 20_000

GRANT_AUTHORIZATION_CODE = "authorization_code"
GRANT_IMPLICIT = "implicit"
ALL_GRANTS = frozenset({GRANT_AUTHORIZATION_CODE, GRANT_IMPLICIT})


class OAuthError(ValueError):
    """Protocol-level rejection; reason is a stable machine-readable code."""

    def __init__(self, reason: str, message: str):
        super().__init__(message)
        self.reason = reason
        self.message = message


def opaque(rng: random.Random, length: int = OPAQUE_LENGTH) -> str:
    return "".join(rng.choice(OPAQUE_ALPHABET) for _ in range(length))


def hash_password(password: str, salt: str) -> str:
    digest = hashlib.pbkdf2_hmac(
        "sha256", password.encode("utf-8"), salt.encode("utf-8"), PBKDF2_ITERATIONS
    )
    return f"pbkdf2-sha256${PBKDF2_ITERATIONS}${salt}${digest.hex()}"


def verify_password(password: str, stored: str) -> bool:
    try:
        _scheme, _iters, salt, _hexdigest = stored.split("$")
    except ValueError:
        return False
    return hmac.compare_digest(hash_password(password, salt), stored)


def validate_redirect_uri(uri: str) -> None:
    parts = urlsplit(uri)
    if not parts.scheme or not parts.netloc:
        raise OAuthError("invalid_redirect_uri", f"redirect URI must be absolute: {uri!r}")
    if parts.fragment:
        raise OAuthError("invalid_redirect_uri", f"redirect URI must not carry a fragment: {uri!r}")


@dataclass
class User:
    user_id: str
    username: str
    password_digest: str
    email: str
    display_name: str

    def public_profile(self) -> dict:
        # the digest never leaves the store
        return {"username": self.username, "email": self.email}


@dataclass
class ClientRegistration:
    client_id: str
    client_secret: str
    owner_user_id: str
    redirect_uris: tuple[str, ...]
    allowed_grants: frozenset[str]
    created_at: datetime


@dataclass
class AuthorizationCode:
    code: str
    client_id: str
    redirect_uri: str
    user_id: str
    issued_at: datetime
    ttl_seconds: int
    consumed: bool = False

    def expired(self, now: datetime) -> bool:
        return now > self.issued_at + timedelta(seconds=self.ttl_seconds)


@dataclass
class AccessToken:
    token: str
    grant_type: str
    client_id: str
    user_id: str
    issued_at: datetime
    ttl_seconds: int
    scope: tuple[str, ...] = ("profile",)

    def expired(self, now: datetime) -> bool:
        return now > self.issued_at + timedelta(seconds=self.ttl_seconds)


@dataclass
class Session:
    session_id: str
    user_id: str
    source_ip: str
    user_agent: str
    created_at: datetime
    last_seen: datetime

    def __post_init__(self):
        if self.last_seen < self.created_at:
            raise ValueError("last_seen must be >= created_at")


@dataclass
class IdentityStore:
    """Thread-safe in-memory store; one per testbed run."""

    seed: int = 42
    code_ttl_seconds: int = 60
    token_ttl_seconds: int = 3600
    _rng: random.Random = field(init=False, repr=False)
    _lock: threading.RLock = field(init=False, repr=False)

    def __post_init__(self):
        self._rng = random.Random(self.seed)
        self._lock = threading.RLock()
        self._users: dict[str, User] = {}  # by username
        self._users_by_id: dict[str, User] = {}
        self._clients: dict[str, ClientRegistration] = {}
        self._codes: dict[str, AuthorizationCode] = {}
        self._tokens: dict[str, AccessToken] = {}
        self._sessions: dict[str, Session] = {}

    # -- users ------------------------------------------------------------

    def add_user(self, username: str, password: str, email: str, display_name: str = "") -> User:
        with self._lock:
            if username in self._users:
                raise ValueError(f"username already taken: {username}")
            salt = opaque(self._rng, 16)
            user = User(
                user_id=opaque(self._rng, 12),
                username=username,
                password_digest=hash_password(password, salt),
                email=email,
                display_name=display_name or username,
            )
            self._users[username] = user
            self._users_by_id[user.user_id] = user
            return user

    def authenticate(self, username: str, password: str) -> User | None:
        with self._lock:
            user = self._users.get(username)
        if user is None:
            # burn comparable work so unknown users are not discernible by timing
            verify_password(password, hash_password("*", "decoy-salt")[:20] + "$x$y$z")
            return None
        return user if verify_password(password, user.password_digest) else None

    def get_user(self, username: str) -> User | None:
        with self._lock:
            return self._users.get(username)

    def user_by_id(self, user_id: str) -> User | None:
        with self._lock:
            return self._users_by_id.get(user_id)

    # -- sessions ---------------------------------------------------------

    def create_session(self, user: User, source_ip: str, user_agent: str, now: datetime) -> Session:
        with self._lock:
            session = Session(
                session_id=opaque(self._rng, 24),
                user_id=user.user_id,
                source_ip=source_ip,
                user_agent=user_agent,
                created_at=now,
                last_seen=now,
            )
            self._sessions[session.session_id] = session
            return session

    def get_session(self, session_id: str) -> Session | None:
        with self._lock:
            return self._sessions.get(session_id)

    def touch_session(self, session_id: str, now: datetime) -> None:
        with self._lock:
            session = self._sessions.get(session_id)
            if session and now > session.last_seen:
                self._sessions[session_id] = replace(session, last_seen=now)

    # -- clients ----------------------------------------------------------

    def register_client(
        self,
        owner: User,
        redirect_uris: list[str],
        allowed_grants: frozenset[str] | None = None,
        now: datetime | None = None,
    ) -> ClientRegistration:
        if not redirect_uris:
            raise OAuthError("invalid_redirect_uri", "at least one redirect URI is required")
        for uri in redirect_uris:
            validate_redirect_uri(uri)
        grants = frozenset(allowed_grants) if allowed_grants is not None else ALL_GRANTS
        if not grants or not grants <= ALL_GRANTS:
            raise OAuthError("invalid_grant_set", f"allowed_grants must be a non-empty subset of {sorted(ALL_GRANTS)}")
        with self._lock:
            registration = ClientRegistration(
                client_id=opaque(self._rng, 20),
                client_secret=opaque(self._rng),
                owner_user_id=owner.user_id,
                redirect_uris=tuple(redirect_uris),
                allowed_grants=grants,
                created_at=now or datetime.now().astimezone(),
            )
            self._clients[registration.client_id] = registration
            return registration

    def get_client(self, client_id: str) -> ClientRegistration | None:
        with self._lock:
            return self._clients.get(client_id)

    # -- codes and tokens ---------------------------------------------------

    def issue_code(self, client_id: str, redirect_uri: str, user_id: str, now: datetime) -> AuthorizationCode:
        with self._lock:
            code = AuthorizationCode(
                code=opaque(self._rng),
                client_id=client_id,
                redirect_uri=redirect_uri,
                user_id=user_id,
                issued_at=now,
                ttl_seconds=self.code_ttl_seconds,
            )
            self._codes[code.code] = code
            return code

    def issue_token(self, grant_type: str, client_id: str, user_id: str, now: datetime) -> AccessToken:
        with self._lock:
            token = AccessToken(
                token=opaque(self._rng),
                grant_type=grant_type,
                client_id=client_id,
                user_id=user_id,
                issued_at=now,
                ttl_seconds=self.token_ttl_seconds,
            )
            if token.token in self._tokens:  # pragma: no cover - 62^42 space
                raise RuntimeError("token collision")
            self._tokens[token.token] = token
            return token

    def exchange_code(
        self,
        client_id: str,
        client_secret: str,
        code_value: str,
        redirect_uri: str,
        now: datetime,
    ) -> AccessToken:
        """Single-use exchange; wrong credentials never consume the code."""
        with self._lock:
            client = self._clients.get(client_id)
            if client is None or not hmac.compare_digest(client.client_secret, client_secret):
                raise OAuthError("invalid_client", "unknown client or bad secret")
            code = self._codes.get(code_value)
            if code is None or code.client_id != client_id:
                raise OAuthError("invalid_grant", "unknown authorization code")
            if code.redirect_uri != redirect_uri:
                raise OAuthError("invalid_grant", "redirect_uri mismatch")
            if code.consumed:
                raise OAuthError("invalid_grant", "authorization code already used")
            if code.expired(now):
                raise OAuthError("invalid_grant", "authorization code expired")
            code.consumed = True
            return self.issue_token(GRANT_AUTHORIZATION_CODE, client_id, code.user_id, now)

    def get_token(self, token_value: str, now: datetime) -> AccessToken | None:
        """Live token or None; expired and never-issued are indistinguishable."""
        with self._lock:
            token = self._tokens.get(token_value)
            if token is None or token.expired(now):
                return None
            return token

    def token_count(self) -> int:
        with self._lock:
            return len(self._tokens)

    # -- resolution for the detection side ---------------------------------

    def resolve_principal(self, kind: str, value: str) -> str | None:
        """Map a token or session id back to a username, if known."""
        with self._lock:
            if kind == "token":
                token = self._tokens.get(value)
                user = self._users_by_id.get(token.user_id) if token else None
            elif kind == "session":
                session = self._sessions.get(value)
                user = self._users_by_id.get(session.user_id) if session else None
            else:
                user = None
            return user.username if user else None
