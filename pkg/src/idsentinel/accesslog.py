"""Shared access-log format for every server in the testbed.

One line per HTTP request:

    2024-05-01T12:00:00.000Z - 10.0.0.5:51234 - GET /api/userinfo HTTP/1.1 - {"User-Agent":"Mozilla/5.0"}

Fields are separated by " - ". The headers field is JSON and always last,
so the delimiter sequence appearing inside a header value cannot break
parsing. The full grammar lives in docs/logformat.md; parse_line() is the
exact inverse of format_record().
"""

from __future__ import annotations

import ipaddress
import json
import re
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterator

DEFAULT_LOG_NAME = "header_logs.log"

_TS_RE = re.compile(r"^(\d{4})-(\d{2})-(\d{2})T(\d{2}):(\d{2}):(\d{2})\.(\d{3})Z$")
_TS_PREFIX_RE = re.compile(r"^\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}")
_VERSION_RE = re.compile(r"^HTTP/\d(?:\.\d)?$")
_DELIM = " - "


class LogParseError(ValueError):
    """Raised for a line that does not match the log grammar."""

    def __init__(self, offset: int, reason: str):
        super().__init__(f"offset {offset}: {reason}")
        self.offset = offset
        self.reason = reason


def _validate_no_ws(value: str, what: str) -> None:
    if not value:
        raise ValueError(f"{what} must be non-empty")
    if any(c in value for c in " \t\r\n"):
        raise ValueError(f"{what} must not contain whitespace: {value!r}")


@dataclass(frozen=True)
class LogRecord:
    """One parsed access-log line."""

    timestamp: datetime
    source_ip: str
    source_port: int
    method: str
    path_and_query: str
    http_version: str
    headers: tuple[tuple[str, str], ...] = field(default_factory=tuple)

    def __post_init__(self):
        ts = self.timestamp
        if ts.tzinfo is None or ts.utcoffset() != timezone.utc.utcoffset(None):
            raise ValueError("timestamp must be timezone-aware UTC")
        if ts.microsecond % 1000 != 0:
            raise ValueError("timestamp precision is milliseconds")
        object.__setattr__(self, "source_ip", str(ipaddress.ip_address(self.source_ip)))
        if not 1 <= self.source_port <= 65535:
            raise ValueError(f"source_port out of range: {self.source_port}")
        _validate_no_ws(self.method, "method")
        _validate_no_ws(self.path_and_query, "path_and_query")
        if not _VERSION_RE.match(self.http_version):
            raise ValueError(f"bad http_version: {self.http_version!r}")
        pairs = []
        for pair in self.headers:
            name, value = pair
            _validate_no_ws(name, "header name")
            if ":" in name:
                raise ValueError(f"header name must not contain ':': {name!r}")
            if not isinstance(value, str):
                raise ValueError("header value must be a string")
            pairs.append((name, value))
        object.__setattr__(self, "headers", tuple(pairs))

    def header(self, name: str) -> str | None:
        """First header value matching name, case-insensitive."""
        lname = name.lower()
        for hname, value in self.headers:
            if hname.lower() == lname:
                return value
        return None

    def request_line(self) -> str:
        return f"{self.method} {self.path_and_query} {self.http_version}"


def utc_ms(dt: datetime | None = None) -> datetime:
    """Current (or given) UTC time truncated to millisecond precision."""
    dt = dt or datetime.now(timezone.utc)
    dt = dt.astimezone(timezone.utc)
    return dt.replace(microsecond=(dt.microsecond // 1000) * 1000)


def format_timestamp(ts: datetime) -> str:
    return f"{ts:%Y-%m-%dT%H:%M:%S}.{ts.microsecond // 1000:03d}Z"


def parse_timestamp(text: str, offset: int = 0) -> datetime:
    m = _TS_RE.match(text)
    if not m:
        if _TS_PREFIX_RE.match(text) and not text.endswith("Z"):
            raise LogParseError(offset, "timestamp not UTC")
        raise LogParseError(offset, f"bad timestamp: {text!r}")
    y, mo, d, h, mi, s, ms = (int(g) for g in m.groups())
    try:
        return datetime(y, mo, d, h, mi, s, ms * 1000, tzinfo=timezone.utc)
    except ValueError as exc:
        raise LogParseError(offset, f"bad timestamp: {exc}") from None


def _format_headers(headers: tuple[tuple[str, str], ...]) -> str:
    names = [n for n, _ in headers]
    if len(set(names)) == len(names):
        obj: dict | list = {n: v for n, v in headers}
    else:
        # duplicate names are legal in HTTP; keep order with an array of pairs
        obj = [[n, v] for n, v in headers]
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def format_record(record: LogRecord) -> str:
    """Serialize one record to its log line (no trailing newline)."""
    return _DELIM.join(
        (
            format_timestamp(record.timestamp),
            f"{record.source_ip}:{record.source_port}",
            record.request_line(),
            _format_headers(record.headers),
        )
    )


def _byte_offset(line: str, char_index: int) -> int:
    return len(line[:char_index].encode("utf-8"))


def parse_line(line: str) -> LogRecord:
    """Exact inverse of format_record. Raises LogParseError on bad input."""
    line = line.rstrip("\n")
    if "\n" in line or "\r" in line:
        raise LogParseError(0, "line contains raw newline")

    fields: list[str] = []
    cursor = 0
    for _ in range(3):
        idx = line.find(_DELIM, cursor)
        if idx < 0:
            raise LogParseError(
                _byte_offset(line, len(line)), "truncated line: expected ' - ' delimiter"
            )
        fields.append(line[cursor:idx])
        cursor = idx + len(_DELIM)
    fields.append(line[cursor:])
    ts_text, addr_text, req_text, headers_text = fields

    ts = parse_timestamp(ts_text, 0)

    addr_offset = _byte_offset(line, len(ts_text) + len(_DELIM))
    ip_text, sep, port_text = addr_text.rpartition(":")
    if not sep or not port_text.isdigit():
        raise LogParseError(addr_offset, f"bad source address: {addr_text!r}")
    try:
        ip = str(ipaddress.ip_address(ip_text))
    except ValueError:
        raise LogParseError(addr_offset, f"bad source ip: {ip_text!r}") from None
    port = int(port_text)
    if not 1 <= port <= 65535:
        raise LogParseError(addr_offset, f"source port out of range: {port}")

    req_offset = addr_offset + _byte_offset(addr_text, len(addr_text)) + len(_DELIM)
    parts = req_text.split(" ")
    if len(parts) != 3:
        raise LogParseError(req_offset, f"bad request line: {req_text!r}")
    method, path, version = parts

    headers_offset = req_offset + len(req_text.encode("utf-8")) + len(_DELIM)
    try:
        obj = json.loads(headers_text)
    except json.JSONDecodeError as exc:
        raise LogParseError(headers_offset, f"bad headers JSON: {exc.msg}") from None
    if isinstance(obj, dict):
        pairs = [(n, v) for n, v in obj.items()]
    elif isinstance(obj, list):
        pairs = []
        for item in obj:
            if not (isinstance(item, list) and len(item) == 2):
                raise LogParseError(headers_offset, "header array entries must be [name, value]")
            pairs.append((item[0], item[1]))
    else:
        raise LogParseError(headers_offset, "headers must be a JSON object or array")

    try:
        return LogRecord(
            timestamp=ts,
            source_ip=ip,
            source_port=port,
            method=method,
            path_and_query=path,
            http_version=version,
            headers=tuple(pairs),
        )
    except ValueError as exc:
        raise LogParseError(0, f"invalid record: {exc}") from None


class LogWriter:
    """Append-only writer; one designated writer per file.

    Appends are serialized internally; per-writer timestamps must be
    non-decreasing.
    """

    def __init__(self, path: str | Path, *, enforce_order: bool = True):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "ab")
        self._lock = threading.Lock()
        self._enforce_order = enforce_order
        self._last_ts: datetime | None = None

    def append(self, record: LogRecord) -> int:
        """Write one line; returns the byte offset the line starts at."""
        data = (format_record(record) + "\n").encode("utf-8")
        with self._lock:
            if self._enforce_order and self._last_ts and record.timestamp < self._last_ts:
                raise ValueError(
                    f"timestamp regression: {record.timestamp} < {self._last_ts}"
                )
            self._last_ts = record.timestamp
            start = self._fh.tell()
            self._fh.write(data)
            self._fh.flush()
            return start

    def size(self) -> int:
        with self._lock:
            return self._fh.tell()

    def close(self) -> None:
        with self._lock:
            if not self._fh.closed:
                self._fh.close()


class LogTailer:
    """Reads records back from the log file; resumable by byte offset.

    Malformed lines are skipped and counted (the malformed_count gauge);
    a detector that halts on bad input is an availability risk.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.malformed_count = 0
        self.parsed_count = 0
        self.consumed_offset = 0

    def _check_boundary(self, fh, offset: int) -> None:
        fh.seek(0, 2)
        size = fh.tell()
        if offset > size:
            raise ValueError(f"offset {offset} beyond end of file ({size})")
        if offset > 0:
            fh.seek(offset - 1)
            if fh.read(1) != b"\n":
                raise ValueError(f"offset {offset} is not a line boundary")
        fh.seek(offset)

    def tail_with_spans(
        self, from_offset: int = 0
    ) -> Iterator[tuple[LogRecord, int, int, str]]:
        """Like tail(), plus each line's start offset and verbatim text."""
        with open(self.path, "rb") as fh:
            self._check_boundary(fh, from_offset)
            offset = from_offset
            while True:
                raw = fh.readline()
                if not raw or not raw.endswith(b"\n"):
                    return
                next_offset = offset + len(raw)
                try:
                    text = raw.decode("utf-8").rstrip("\n")
                    record = parse_line(text)
                except (LogParseError, UnicodeDecodeError):
                    self.malformed_count += 1
                    offset = next_offset
                    self.consumed_offset = max(self.consumed_offset, next_offset)
                    continue
                self.parsed_count += 1
                self.consumed_offset = max(self.consumed_offset, next_offset)
                yield record, offset, next_offset, text
                offset = next_offset

    def tail(self, from_offset: int = 0) -> Iterator[tuple[LogRecord, int]]:
        """Yield (record, next_offset) for every complete line after from_offset.

        Stops at end of file; an incomplete trailing line is left for the
        next call, so resuming from next_offset never duplicates or skips.
        """
        for record, _start, next_offset, _text in self.tail_with_spans(from_offset):
            yield record, next_offset

    def follow(
        self,
        from_offset: int = 0,
        *,
        poll_interval: float = 0.05,
        stop: threading.Event | None = None,
    ) -> Iterator[tuple[LogRecord, int]]:
        """tail() that keeps polling for appended lines until stop is set."""
        offset = from_offset
        while stop is None or not stop.is_set():
            got = False
            for record, next_offset in self.tail(offset):
                offset = next_offset
                got = True
                yield record, next_offset
            if not got:
                time.sleep(poll_interval)
        # final drain so a stop request never drops already-written lines
        for record, next_offset in self.tail(offset):
            yield record, next_offset
