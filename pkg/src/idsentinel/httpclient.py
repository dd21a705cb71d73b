"""Tiny HTTP client on http.client: explicit headers, no redirect following.

Used by the traffic driver and by the OAuth client apps for their
server-to-server calls; redirects are never followed automatically because
the caller inspects Location (and fragments) itself.
"""

from __future__ import annotations

import http.client
from dataclasses import dataclass
from urllib.parse import urlsplit


class TargetUnreachable(ConnectionError):
    pass


@dataclass
class HttpResponse:
    status: int
    headers: list[tuple[str, str]]
    body: bytes

    def header(self, name: str) -> str | None:
        lname = name.lower()
        for hname, value in self.headers:
            if hname.lower() == lname:
                return value
        return None

    def json(self):
        import json

        return json.loads(self.body.decode("utf-8"))


def request(
    base_url: str,
    method: str,
    path: str,
    *,
    headers: list[tuple[str, str]] | None = None,
    body: bytes | None = None,
    timeout: float = 10.0,
) -> HttpResponse:
    parts = urlsplit(base_url)
    if parts.scheme not in ("http", ""):
        raise ValueError(f"only http targets are supported: {base_url}")
    host = parts.hostname or "127.0.0.1"
    port = parts.port or 80
    conn = http.client.HTTPConnection(host, port, timeout=timeout)
    try:
        conn.putrequest(method, path, skip_host=True, skip_accept_encoding=True)
        sent_host = False
        for name, value in headers or []:
            conn.putheader(name, value)
            if name.lower() == "host":
                sent_host = True
        if not sent_host:
            conn.putheader("Host", f"{host}:{port}")
        if body is not None:
            conn.putheader("Content-Length", str(len(body)))
        conn.endheaders(message_body=body)
        resp = conn.getresponse()
        data = resp.read()
        return HttpResponse(status=resp.status, headers=list(resp.getheaders()), body=data)
    except (ConnectionError, OSError) as exc:
        raise TargetUnreachable(f"{method} {base_url}{path}: {exc}") from exc
    finally:
        conn.close()
