"""Shared fixtures: record builders and a testbed factory."""

from __future__ import annotations

import sys
from datetime import datetime, timedelta, timezone

import pytest


def pytest_runtest_logreport(report):
    """One visible verdict line per acceptance criterion."""
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    name = report.nodeid.split("::", 1)[1]
    outcome = "PASS" if report.passed else "FAIL"
    print(f"\nACCEPTANCE {name}: {outcome}", file=sys.stderr)

from idsentinel.accesslog import LogRecord
from idsentinel.config import Config
from idsentinel.orchestrator import Testbed

BASE_TS = datetime(2024, 5, 1, 0, 0, 0, tzinfo=timezone.utc)


def make_record(
    ts_s: float = 0.0,
    *,
    ip: str = "10.0.0.5",
    port: int = 51234,
    method: str = "GET",
    path: str = "/api/userinfo",
    ua: str = "Mozilla/5.0",
    token: str | None = None,
    sid: str | None = None,
    login: tuple[str, str] | None = None,  # (username, "success"|"failure")
    digest: str | None = None,
    headers: list[tuple[str, str]] | None = None,
) -> LogRecord:
    hdrs: list[tuple[str, str]] = [("User-Agent", ua)]
    if token:
        hdrs.append(("Authorization", f"Bearer {token}"))
    if sid:
        hdrs.append(("Cookie", f"sid={sid}"))
    if login:
        user, result = login
        hdrs.append(("X-Login-User", user))
        hdrs.append(("X-Login-Result", result))
    if digest:
        hdrs.append(("X-Cred-Digest", digest))
    if headers:
        hdrs.extend(headers)
    return LogRecord(
        timestamp=BASE_TS + timedelta(seconds=ts_s),
        source_ip=ip,
        source_port=port,
        method=method,
        path_and_query=path,
        http_version="HTTP/1.1",
        headers=tuple(hdrs),
    )


@pytest.fixture
def testbed_factory(tmp_path):
    """Start isolated testbeds; everything is torn down after the test."""
    started: list[Testbed] = []
    counter = {"n": 0}

    def factory(**config_overrides) -> Testbed:
        counter["n"] += 1
        base = tmp_path / f"tb{counter['n']}"
        cfg = Config(
            run_dir=str(base / "run"),
            fixtures_dir=str(base / "fixtures"),
            **config_overrides,
        )
        testbed = Testbed(cfg)
        testbed.up()
        started.append(testbed)
        return testbed

    yield factory
    for testbed in started:
        testbed.down()


@pytest.fixture
def testbed(testbed_factory) -> Testbed:
    return testbed_factory()
