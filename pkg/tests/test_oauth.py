"""OAuth store and server handlers: grants, single-use codes, error opacity."""

from __future__ import annotations

import threading
from datetime import timedelta
from urllib.parse import parse_qsl, urlsplit

import pytest

from idsentinel.oauth.http import Request
from idsentinel.oauth.servers import AuthorizationServer, ResourceServer
from idsentinel.oauth.store import (
    GRANT_AUTHORIZATION_CODE,
    GRANT_IMPLICIT,
    IdentityStore,
    OAuthError,
)
from .conftest import BASE_TS

NOW = BASE_TS


@pytest.fixture
def store():
    s = IdentityStore(seed=7)
    s.add_user("alice", "alice-password", "alice@example.test")
    s.add_user("bob", "bob-password", "bob@example.test")
    return s


@pytest.fixture
def client(store):
    return store.register_client(
        store.get_user("alice"), ["https://client.local/cb"], now=NOW
    )


def make_request(method="GET", path="/", *, headers=None, body=b"", ip="10.0.0.5", now=NOW):
    return Request(
        method=method,
        path=path,
        headers=headers or [("User-Agent", "Mozilla/5.0")],
        body=body,
        source_ip=ip,
        source_port=50000,
        now=now,
    )


class TestClientRegistration:
    def test_minimal_valid_registration(self, store):
        reg = store.register_client(store.get_user("alice"), ["https://client.local/cb"], now=NOW)
        assert reg.redirect_uris == ("https://client.local/cb",)
        assert reg.allowed_grants == frozenset({GRANT_AUTHORIZATION_CODE, GRANT_IMPLICIT})
        assert reg.client_id != reg.client_secret

    def test_empty_redirect_list_rejected(self, store):
        with pytest.raises(OAuthError, match="at least one"):
            store.register_client(store.get_user("alice"), [], now=NOW)

    def test_fragment_in_redirect_uri_rejected(self, store):
        # independent check: the URI parser confirms the fragment is the culprit
        uri = "https://client.local/cb#frag"
        assert urlsplit(uri).fragment == "frag"
        with pytest.raises(OAuthError, match="fragment"):
            store.register_client(store.get_user("alice"), [uri], now=NOW)

    def test_relative_redirect_uri_rejected(self, store):
        with pytest.raises(OAuthError, match="absolute"):
            store.register_client(store.get_user("alice"), ["/cb"], now=NOW)

    def test_client_ids_unique(self, store):
        ids = {
            store.register_client(store.get_user("alice"), ["https://c.local/cb"], now=NOW).client_id
            for _ in range(20)
        }
        assert len(ids) == 20


class TestLogin:
    def test_login_success_binds_source(self, store):
        server = AuthorizationServer(store)
        resp = server.handle(
            make_request(
                "POST",
                "/login",
                headers=[("User-Agent", "Mozilla/5.0"), ("Content-Type", "application/x-www-form-urlencoded")],
                body=b"username=alice&password=alice-password",
            )
        )
        assert resp.status == 200
        cookie = next(v for n, v in resp.headers if n == "Set-Cookie")
        sid = cookie.split(";")[0].split("=", 1)[1]
        session = store.get_session(sid)
        assert session.source_ip == "10.0.0.5"
        assert session.user_agent == "Mozilla/5.0"
        assert ("X-Login-Result", "success") in resp.extra_log_headers

    def test_login_failure_logged(self, store):
        server = AuthorizationServer(store)
        resp = server.handle(make_request("POST", "/login", body=b"username=alice&password=wrong"))
        assert resp.status == 401
        assert ("X-Login-Result", "failure") in resp.extra_log_headers
        assert ("X-Login-User", "alice") in resp.extra_log_headers

    def test_unknown_user_indistinguishable_from_wrong_password(self, store):
        server = AuthorizationServer(store)
        wrong_pw = server.handle(make_request("POST", "/login", body=b"username=alice&password=nope"))
        ghost = server.handle(make_request("POST", "/login", body=b"username=ghost&password=nope"))
        # oracle: identical bytes and status, no username oracle
        assert (wrong_pw.status, wrong_pw.body) == (ghost.status, ghost.body)


def _login_session(store, username="alice", password="alice-password"):
    user = store.authenticate(username, password)
    return store.create_session(user, "10.0.0.5", "Mozilla/5.0", NOW)


class TestAuthorize:
    def _authorize(self, store, client, *, response_type, state="xyz", session=None,
                   redirect_uri=None, now=NOW):
        server = AuthorizationServer(store)
        session = session or _login_session(store)
        query = (
            f"client_id={client.client_id}"
            f"&redirect_uri={redirect_uri or client.redirect_uris[0]}"
            f"&response_type={response_type}"
            f"&state={state}"
        )
        return server.handle(
            make_request(
                "GET",
                f"/authorize?{query}",
                headers=[("User-Agent", "Mozilla/5.0"), ("Cookie", f"sid={session.session_id}")],
                now=now,
            )
        )

    def test_code_redirect_carries_code_and_state(self, store, client):
        resp = self._authorize(store, client, response_type="code")
        assert resp.status == 302
        location = next(v for n, v in resp.headers if n == "Location")
        parts = urlsplit(location)
        q = dict(parse_qsl(parts.query))
        assert location.startswith("https://client.local/cb?")
        assert len(q["code"]) == 42
        assert q["state"] == "xyz"
        assert parts.fragment == ""

    def test_token_redirect_uses_fragment_only(self, store, client):
        resp = self._authorize(store, client, response_type="token")
        location = next(v for n, v in resp.headers if n == "Location")
        parts = urlsplit(location)
        frag = dict(parse_qsl(parts.fragment))
        assert parts.query == ""  # grant separation: never in the query string
        assert len(frag["access_token"]) == 42
        assert frag["token_type"] == "Bearer"
        assert frag["state"] == "xyz"

    def test_state_echo_is_byte_exact(self, store, client):
        state = "x%20y~z.42-_"
        resp = self._authorize(store, client, response_type="code", state=state)
        location = next(v for n, v in resp.headers if n == "Location")
        raw_pairs = dict(parse_qsl(urlsplit(location).query, keep_blank_values=True))
        # parse_qsl decodes the %20 we sent encoded; compare decoded forms
        assert raw_pairs["state"] == "x y~z.42-_"

    def test_unregistered_redirect_uri_rejected_without_issuing(self, store, client):
        before = store.token_count()
        resp = self._authorize(
            store, client, response_type="code", redirect_uri="https://evil.example/cb"
        )
        assert resp.status == 400
        assert store.token_count() == before

    def test_unknown_client(self, store, client):
        server = AuthorizationServer(store)
        session = _login_session(store)
        resp = server.handle(
            make_request(
                "GET",
                "/authorize?client_id=nope&redirect_uri=https://client.local/cb&response_type=code",
                headers=[("Cookie", f"sid={session.session_id}")],
            )
        )
        assert resp.status == 400
        assert resp.json if hasattr(resp, "json") else True

    def test_disallowed_response_type(self, store):
        reg = store.register_client(
            store.get_user("alice"),
            ["https://code-only.local/cb"],
            allowed_grants=frozenset({GRANT_AUTHORIZATION_CODE}),
            now=NOW,
        )
        resp = self._authorize(store, reg, response_type="token",
                               redirect_uri="https://code-only.local/cb")
        assert resp.status == 400

    def test_missing_session_redirects_to_login(self, store, client):
        server = AuthorizationServer(store)
        resp = server.handle(
            make_request("GET", f"/authorize?client_id={client.client_id}&redirect_uri=x&response_type=code")
        )
        assert resp.status == 302
        location = next(v for n, v in resp.headers if n == "Location")
        assert location.startswith("/login?")


class TestExchange:
    def _issue(self, store, client):
        session = _login_session(store)
        return store.issue_code(client.client_id, client.redirect_uris[0], session.user_id, NOW)

    def test_first_exchange_succeeds(self, store, client):
        code = self._issue(store, client)
        token = store.exchange_code(
            client.client_id, client.client_secret, code.code, client.redirect_uris[0], NOW
        )
        assert len(token.token) == 42
        assert token.grant_type == GRANT_AUTHORIZATION_CODE

    def test_second_exchange_rejected(self, store, client):
        code = self._issue(store, client)
        store.exchange_code(client.client_id, client.client_secret, code.code, client.redirect_uris[0], NOW)
        with pytest.raises(OAuthError, match="already used"):
            store.exchange_code(
                client.client_id, client.client_secret, code.code, client.redirect_uris[0], NOW
            )

    def test_wrong_secret_does_not_consume(self, store, client):
        code = self._issue(store, client)
        with pytest.raises(OAuthError):
            store.exchange_code(client.client_id, "bad-secret", code.code, client.redirect_uris[0], NOW)
        # oracle: the code is still exchangeable with the right secret
        token = store.exchange_code(
            client.client_id, client.client_secret, code.code, client.redirect_uris[0], NOW
        )
        assert token is not None

    def test_expired_code_rejected(self, store, client):
        code = self._issue(store, client)
        later = NOW + timedelta(seconds=store.code_ttl_seconds + 1)
        with pytest.raises(OAuthError, match="expired"):
            store.exchange_code(
                client.client_id, client.client_secret, code.code, client.redirect_uris[0], later
            )

    def test_redirect_uri_mismatch_rejected(self, store, client):
        code = self._issue(store, client)
        with pytest.raises(OAuthError, match="redirect_uri"):
            store.exchange_code(
                client.client_id, client.client_secret, code.code, "https://other.local/cb", NOW
            )

    def test_concurrent_exchange_single_winner(self, store, client):
        code = self._issue(store, client)
        results = []

        def attempt():
            try:
                store.exchange_code(
                    client.client_id, client.client_secret, code.code, client.redirect_uris[0], NOW
                )
                results.append("ok")
            except OAuthError:
                results.append("rejected")

        threads = [threading.Thread(target=attempt) for _ in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert results.count("ok") == 1
        assert results.count("rejected") == 7


class TestUserinfo:
    def test_valid_token_returns_profile_without_digest(self, store, client):
        session = _login_session(store)
        token = store.issue_token(GRANT_AUTHORIZATION_CODE, client.client_id, session.user_id, NOW)
        resource = ResourceServer(store)
        resp = resource.handle(
            make_request("GET", "/api/userinfo", headers=[("Authorization", f"Bearer {token.token}")])
        )
        assert resp.status == 200
        body = resp.body.decode()
        assert '"username": "alice"' in body and '"email"' in body
        assert "password" not in body and "pbkdf2" not in body

    def test_expired_token_rejected(self, store, client):
        session = _login_session(store)
        token = store.issue_token(GRANT_IMPLICIT, client.client_id, session.user_id, NOW)
        resource = ResourceServer(store)
        later = NOW + timedelta(seconds=store.token_ttl_seconds + 1)
        resp = resource.handle(
            make_request("GET", "/api/userinfo",
                         headers=[("Authorization", f"Bearer {token.token}")], now=later)
        )
        assert resp.status == 401

    def test_never_issued_token_identical_to_expired(self, store, client):
        session = _login_session(store)
        token = store.issue_token(GRANT_IMPLICIT, client.client_id, session.user_id, NOW)
        resource = ResourceServer(store)
        later = NOW + timedelta(seconds=store.token_ttl_seconds + 1)
        expired = resource.handle(
            make_request("GET", "/api/userinfo",
                         headers=[("Authorization", f"Bearer {token.token}")], now=later)
        )
        phantom = resource.handle(
            make_request("GET", "/api/userinfo",
                         headers=[("Authorization", "Bearer " + "A" * 42)])
        )
        # oracle: byte-compare both rejection responses
        assert (expired.status, expired.body) == (phantom.status, phantom.body)


class TestInvariants:
    def test_token_values_never_repeat(self, store, client):
        session = _login_session(store)
        tokens = [
            store.issue_token(GRANT_IMPLICIT, client.client_id, session.user_id, NOW).token
            for _ in range(200)
        ]
        assert len(set(tokens)) == len(tokens)

    def test_session_last_seen_monotone(self, store):
        session = _login_session(store)
        store.touch_session(session.session_id, NOW + timedelta(seconds=5))
        refreshed = store.get_session(session.session_id)
        assert refreshed.last_seen >= refreshed.created_at
        store.touch_session(session.session_id, NOW - timedelta(seconds=50))
        assert store.get_session(session.session_id).last_seen == refreshed.last_seen

    def test_seeded_stores_reproduce_values(self):
        def sequence(seed):
            s = IdentityStore(seed=seed)
            s.add_user("alice", "pw", "a@x")
            user = s.get_user("alice")
            client = s.register_client(user, ["https://c.local/cb"], now=NOW)
            token = s.issue_token(GRANT_IMPLICIT, client.client_id, user.user_id, NOW)
            return client.client_id, client.client_secret, token.token

        assert sequence(11) == sequence(11)
        assert sequence(11) != sequence(12)
