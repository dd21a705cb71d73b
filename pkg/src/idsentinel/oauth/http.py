"""Threaded HTTP plumbing shared by every testbed listener.

Each server wraps a plain handle(Request) -> Response function. The access
logger runs as middleware: after the handler returns, the request (plus any
synthetic headers the handler wants on the record, such as the login
outcome) is appended to the shared log file.

When trust_harness_headers is set, X-Forwarded-For / X-Forwarded-Port /
X-Testbed-Time override the socket peer address and the wall clock, so
scripted scenarios control source identity and virtual time.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from datetime import datetime
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable, Iterator
from urllib.parse import parse_qsl, urlsplit

from ..accesslog import LogRecord, LogWriter, format_timestamp, parse_timestamp, utc_ms

HARNESS_TIME_HEADER = "X-Testbed-Time"
FORWARDED_FOR_HEADER = "X-Forwarded-For"
FORWARDED_PORT_HEADER = "X-Forwarded-Port"


@dataclass
class Request:
    method: str
    path: str  # path plus query, as received
    headers: list[tuple[str, str]]
    body: bytes
    source_ip: str
    source_port: int
    now: datetime  # virtual time when harness headers are trusted
    http_version: str = "HTTP/1.1"

    def header(self, name: str) -> str | None:
        lname = name.lower()
        for hname, value in self.headers:
            if hname.lower() == lname:
                return value
        return None

    @property
    def path_only(self) -> str:
        return urlsplit(self.path).path

    @property
    def query(self) -> dict[str, str]:
        return dict(parse_qsl(urlsplit(self.path).query, keep_blank_values=True))

    @property
    def form(self) -> dict[str, str]:
        return dict(parse_qsl(self.body.decode("utf-8"), keep_blank_values=True))

    def json(self):
        import json

        return json.loads(self.body.decode("utf-8"))

    @property
    def cookies(self) -> dict[str, str]:
        raw = self.header("Cookie") or ""
        out: dict[str, str] = {}
        for part in raw.split(";"):
            name, sep, value = part.strip().partition("=")
            if sep:
                out.setdefault(name, value)
        return out


@dataclass
class Response:
    status: int = 200
    headers: list[tuple[str, str]] = field(default_factory=list)
    body: bytes = b""
    # appended to the logged record, not sent on the wire
    extra_log_headers: list[tuple[str, str]] = field(default_factory=list)
    # when set, body is ignored and chunks are written as produced (SSE)
    stream: Iterator[bytes] | None = None

    @classmethod
    def json(cls, obj, status: int = 200, **kwargs) -> "Response":
        import json

        body = json.dumps(obj, ensure_ascii=False).encode("utf-8")
        resp = cls(status=status, body=body, **kwargs)
        resp.headers.append(("Content-Type", "application/json"))
        return resp

    @classmethod
    def text(cls, text: str, status: int = 200, content_type: str = "text/html; charset=utf-8") -> "Response":
        resp = cls(status=status, body=text.encode("utf-8"))
        resp.headers.append(("Content-Type", content_type))
        return resp

    @classmethod
    def redirect(cls, location: str, status: int = 302) -> "Response":
        resp = cls(status=status)
        resp.headers.append(("Location", location))
        return resp

    def set_cookie(self, name: str, value: str) -> "Response":
        self.headers.append(("Set-Cookie", f"{name}={value}; Path=/"))
        return self


Handler = Callable[[Request], Response]


class HttpServer:
    """One listener; binds at construction so the port is known immediately."""

    def __init__(
        self,
        name: str,
        handler: Handler,
        host: str = "127.0.0.1",
        port: int = 0,
        *,
        log_writer: LogWriter | None = None,
        trust_harness_headers: bool = False,
    ):
        self.name = name
        self.handler = handler
        self.log_writer = log_writer
        self.trust_harness_headers = trust_harness_headers
        outer = self

        class _RequestHandler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"

            def log_message(self, *args):  # stdlib stderr chatter off
                pass

            def _handle(self):
                outer._dispatch(self)

            do_GET = do_POST = do_PATCH = do_PUT = do_DELETE = _handle

        try:
            self._httpd = ThreadingHTTPServer((host, port), _RequestHandler)
        except OSError as exc:
            raise OSError(f"component {name}: cannot bind {host}:{port}: {exc}") from exc
        self._httpd.daemon_threads = True
        self._thread: threading.Thread | None = None

    @property
    def port(self) -> int:
        return self._httpd.server_address[1]

    @property
    def base_url(self) -> str:
        host = self._httpd.server_address[0]
        return f"http://{host}:{self.port}"

    def start(self) -> None:
        if self._thread is None:
            self._thread = threading.Thread(
                target=lambda: self._httpd.serve_forever(poll_interval=0.05),
                name=f"http-{self.name}",
                daemon=True,
            )
            self._thread.start()

    def stop(self) -> None:
        if self._thread is not None:
            self._httpd.shutdown()
            self._thread.join(timeout=5)
            self._thread = None
        self._httpd.server_close()

    # -- request plumbing ---------------------------------------------------

    def _build_request(self, rh: BaseHTTPRequestHandler) -> Request:
        headers = [(name, value) for name, value in rh.headers.items()]
        length = int(rh.headers.get("Content-Length") or 0)
        body = rh.rfile.read(length) if length else b""

        peer_ip, peer_port = rh.client_address[0], rh.client_address[1]
        source_ip, source_port = peer_ip, peer_port
        now = utc_ms()
        if self.trust_harness_headers:
            fwd = rh.headers.get(FORWARDED_FOR_HEADER)
            if fwd:
                source_ip = fwd.split(",")[0].strip()
            fwd_port = rh.headers.get(FORWARDED_PORT_HEADER)
            if fwd_port and fwd_port.isdigit():
                source_port = int(fwd_port)
            harness_time = rh.headers.get(HARNESS_TIME_HEADER)
            if harness_time:
                now = parse_timestamp(harness_time)

        return Request(
            method=rh.command,
            path=rh.path,
            headers=headers,
            body=body,
            source_ip=source_ip,
            source_port=source_port,
            now=now,
            http_version=rh.request_version,
        )

    def _log(self, request: Request, response: Response) -> None:
        if self.log_writer is None:
            return
        record = LogRecord(
            timestamp=request.now,
            source_ip=request.source_ip,
            source_port=request.source_port,
            method=request.method,
            path_and_query=request.path,
            http_version=request.http_version,
            headers=tuple(request.headers) + tuple(response.extra_log_headers),
        )
        self.log_writer.append(record)

    def _dispatch(self, rh: BaseHTTPRequestHandler) -> None:
        try:
            request = self._build_request(rh)
        except ValueError:
            rh.send_error(400)
            return
        try:
            response = self.handler(request)
        except Exception:  # handler bug: answer 500, keep serving
            response = Response.json({"code": "internal_error", "message": "internal error"}, status=500)
        self._log(request, response)

        try:
            rh.send_response_only(response.status)
            for name, value in response.headers:
                rh.send_header(name, value)
            if response.stream is not None:
                rh.send_header("Connection", "close")
                rh.end_headers()
                for chunk in response.stream:
                    rh.wfile.write(chunk)
                    rh.wfile.flush()
                rh.close_connection = True
            else:
                rh.send_header("Content-Length", str(len(response.body)))
                rh.end_headers()
                if response.body:
                    rh.wfile.write(response.body)
        except (BrokenPipeError, ConnectionResetError):
            rh.close_connection = True


def harness_headers(now: datetime, source_ip: str, source_port: int | None = None) -> list[tuple[str, str]]:
    """Headers a trusted caller sends to control logged identity and time."""
    headers = [
        (HARNESS_TIME_HEADER, format_timestamp(now)),
        (FORWARDED_FOR_HEADER, source_ip),
    ]
    if source_port is not None:
        headers.append((FORWARDED_PORT_HEADER, str(source_port)))
    return headers
