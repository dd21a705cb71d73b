"""The observed deployment: authorization server, resource server, client apps.

Handlers are plain Request -> Response functions so every flow is testable
without sockets; HttpServer adds the wire and the access-log middleware.
"""

from __future__ import annotations

import random
import threading
from dataclasses import dataclass, field
from urllib.parse import urlencode

from .. import httpclient
from .http import Request, Response, harness_headers
from .store import (
    GRANT_AUTHORIZATION_CODE,
    GRANT_IMPLICIT,
    IdentityStore,
    OAuthError,
    opaque,
)

SESSION_COOKIE = "sid"
CLIENT_SESSION_COOKIE = "csid"

# fixed rejection bodies: unknown and invalid cases must be indistinguishable
LOGIN_FAILURE = Response.json(
    {"code": "invalid_credentials", "message": "invalid username or password"}, status=401
)
TOKEN_FAILURE = Response.json(
    {"code": "invalid_token", "message": "invalid or expired token"}, status=401
)


def _fresh(resp: Response) -> Response:
    return Response(status=resp.status, headers=list(resp.headers), body=resp.body)


class AuthorizationServer:
    """GET /login, POST /login, GET /authorize, POST /token, POST /clients."""

    def __init__(self, store: IdentityStore):
        self.store = store

    def handle(self, request: Request) -> Response:
        route = (request.method, request.path_only)
        if route == ("GET", "/login"):
            return Response.text("<html><body><form method='post' action='/login'>login</form></body></html>")
        if route == ("POST", "/login"):
            return self.login(request)
        if route == ("GET", "/authorize"):
            return self.authorize(request)
        if route == ("POST", "/token"):
            return self.token(request)
        if route == ("POST", "/clients"):
            return self.register_client(request)
        return Response.json({"code": "not_found", "message": "no such endpoint"}, status=404)

    # -- endpoints ----------------------------------------------------------

    def login(self, request: Request) -> Response:
        form = request.form
        username = form.get("username", "")
        password = form.get("password", "")
        user = self.store.authenticate(username, password)
        if user is None:
            resp = _fresh(LOGIN_FAILURE)
            resp.extra_log_headers = [("X-Login-Result", "failure"), ("X-Login-User", username)]
            return resp
        session = self.store.create_session(user, request.source_ip, request.header("User-Agent") or "", request.now)
        resp = Response.json({"ok": True, "username": user.username})
        resp.set_cookie(SESSION_COOKIE, session.session_id)
        resp.extra_log_headers = [("X-Login-Result", "success"), ("X-Login-User", username)]
        return resp

    def register_client(self, request: Request) -> Response:
        session = self._session(request)
        if session is None:
            return Response.json({"code": "unauthenticated", "message": "login required"}, status=401)
        owner = self.store.user_by_id(session.user_id)
        try:
            body = request.json()
            uris = body.get("redirect_uris") or []
        except ValueError:
            return Response.json({"code": "bad_request", "message": "body must be JSON"}, status=400)
        try:
            reg = self.store.register_client(owner, list(uris), now=request.now)
        except OAuthError as exc:
            return Response.json({"code": exc.reason, "message": exc.message}, status=400)
        return Response.json(
            {
                "client_id": reg.client_id,
                "client_secret": reg.client_secret,
                "redirect_uris": list(reg.redirect_uris),
                "allowed_grants": sorted(reg.allowed_grants),
            },
            status=201,
        )

    def authorize(self, request: Request) -> Response:
        session = self._session(request)
        if session is None:
            return Response.redirect("/login?" + urlencode({"next": request.path}))
        query = request.query
        client_id = query.get("client_id", "")
        redirect_uri = query.get("redirect_uri", "")
        response_type = query.get("response_type", "")
        state = query.get("state")

        client = self.store.get_client(client_id)
        if client is None:
            return Response.json({"code": "unknown_client", "message": "client not registered"}, status=400)
        # exact-match policy: never redirect to an unregistered URI
        if redirect_uri not in client.redirect_uris:
            return Response.json({"code": "redirect_uri_mismatch", "message": "redirect URI not registered"}, status=400)
        grant = {"code": GRANT_AUTHORIZATION_CODE, "token": GRANT_IMPLICIT}.get(response_type)
        if grant is None or grant not in client.allowed_grants:
            return Response.json(
                {"code": "unsupported_response_type", "message": f"response_type {response_type!r} not allowed"},
                status=400,
            )

        self.store.touch_session(session.session_id, request.now)
        if grant == GRANT_AUTHORIZATION_CODE:
            code = self.store.issue_code(client_id, redirect_uri, session.user_id, request.now)
            params = [("code", code.code)]
            if state is not None:
                params.append(("state", state))
            return Response.redirect(f"{redirect_uri}?{urlencode(params)}")

        token = self.store.issue_token(GRANT_IMPLICIT, client_id, session.user_id, request.now)
        frag = [("access_token", token.token), ("token_type", "Bearer"), ("expires_in", str(token.ttl_seconds))]
        if state is not None:
            frag.append(("state", state))
        return Response.redirect(f"{redirect_uri}#{urlencode(frag)}")

    def token(self, request: Request) -> Response:
        form = request.form
        if form.get("grant_type") != GRANT_AUTHORIZATION_CODE:
            return Response.json({"code": "unsupported_grant_type", "message": "only authorization_code"}, status=400)
        try:
            token = self.store.exchange_code(
                client_id=form.get("client_id", ""),
                client_secret=form.get("client_secret", ""),
                code_value=form.get("code", ""),
                redirect_uri=form.get("redirect_uri", ""),
                now=request.now,
            )
        except OAuthError as exc:
            return Response.json({"code": exc.reason, "message": exc.message}, status=400)
        return Response.json(
            {"access_token": token.token, "token_type": "Bearer", "expires_in": token.ttl_seconds}
        )

    def _session(self, request: Request):
        sid = request.cookies.get(SESSION_COOKIE)
        return self.store.get_session(sid) if sid else None


class ResourceServer:
    """GET /api/userinfo with a Bearer token."""

    def __init__(self, store: IdentityStore):
        self.store = store

    def handle(self, request: Request) -> Response:
        if (request.method, request.path_only) != ("GET", "/api/userinfo"):
            return Response.json({"code": "not_found", "message": "no such endpoint"}, status=404)
        auth = request.header("Authorization") or ""
        scheme, _, value = auth.partition(" ")
        if scheme.lower() != "bearer" or not value:
            return _fresh(TOKEN_FAILURE)
        token = self.store.get_token(value.strip(), request.now)
        if token is None:
            return _fresh(TOKEN_FAILURE)
        user = self.store.user_by_id(token.user_id)
        return Response.json(user.public_profile())


@dataclass
class ClientApp:
    """One relying party per grant: GET /cb (redirect target) and GET /profile.

    The code-grant client exchanges the code server-side and keeps the token
    in its own session; the implicit-grant client serves a fragment-handler
    page and the user agent itself calls the resource server.
    """

    name: str
    grant_type: str
    auth_base: str
    resource_base: str
    source_ip: str
    source_port: int
    user_agent: str
    client_id: str = ""
    client_secret: str = ""
    redirect_uri: str = ""
    _sessions: dict = field(default_factory=dict)
    _lock: threading.Lock = field(default_factory=threading.Lock)
    _rng: random.Random = field(default_factory=lambda: random.Random(0xC11E47))

    def configure(self, client_id: str, client_secret: str, redirect_uri: str) -> None:
        self.client_id = client_id
        self.client_secret = client_secret
        self.redirect_uri = redirect_uri

    def handle(self, request: Request) -> Response:
        route = (request.method, request.path_only)
        if route == ("GET", "/cb"):
            return self.callback(request)
        if route == ("GET", "/profile"):
            return self.profile(request)
        return Response.json({"code": "not_found", "message": "no such endpoint"}, status=404)

    def _outbound_headers(self, request: Request) -> list[tuple[str, str]]:
        # server-to-server calls carry this app's identity and the caller's virtual time
        return harness_headers(request.now, self.source_ip, self.source_port) + [
            ("User-Agent", self.user_agent)
        ]

    def callback(self, request: Request) -> Response:
        if self.grant_type == GRANT_IMPLICIT:
            # token arrives in the URI fragment, which user agents keep local
            return Response.text(
                "<html><body><script>/* token is read from location.hash by the app */</script></body></html>"
            )
        query = request.query
        code = query.get("code")
        if not code:
            return Response.json({"code": "missing_code", "message": "no authorization code"}, status=400)
        body = urlencode(
            {
                "grant_type": GRANT_AUTHORIZATION_CODE,
                "code": code,
                "redirect_uri": self.redirect_uri,
                "client_id": self.client_id,
                "client_secret": self.client_secret,
            }
        ).encode("utf-8")
        headers = self._outbound_headers(request)
        headers.append(("Content-Type", "application/x-www-form-urlencoded"))
        try:
            resp = httpclient.request(self.auth_base, "POST", "/token", headers=headers, body=body)
        except httpclient.TargetUnreachable:
            return Response.json({"code": "exchange_failed", "message": "authorization server unreachable"}, status=502)
        if resp.status != 200:
            return Response.json({"code": "exchange_failed", "message": "token exchange rejected"}, status=502)
        token = resp.json()["access_token"]
        csid = opaque(self._rng, 24)
        with self._lock:
            self._sessions[csid] = token
        out = Response.redirect("/profile")
        out.set_cookie(CLIENT_SESSION_COOKIE, csid)
        return out

    def profile(self, request: Request) -> Response:
        csid = request.cookies.get(CLIENT_SESSION_COOKIE, "")
        with self._lock:
            token = self._sessions.get(csid)
        if token is None:
            return Response.json({"code": "no_client_session", "message": "complete the grant first"}, status=401)
        headers = self._outbound_headers(request)
        headers.append(("Authorization", f"Bearer {token}"))
        try:
            resp = httpclient.request(self.resource_base, "GET", "/api/userinfo", headers=headers)
        except httpclient.TargetUnreachable:
            return Response.json({"code": "userinfo_failed", "message": "resource server unreachable"}, status=502)
        if resp.status != 200:
            return Response.json({"code": "userinfo_failed", "message": "token rejected"}, status=502)
        profile = resp.json()
        profile["via"] = self.name
        return Response.json(profile)
