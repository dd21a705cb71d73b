"""Wires the whole testbed: OAuth servers with logging, the detection engine
tailing the shared log, and the situational API. One process, one listener
per component; a Testbed handle drives end-to-end runs for CI.
"""

from __future__ import annotations

import json
import os
import threading
from datetime import datetime, timedelta
from pathlib import Path

from .accesslog import LogTailer, LogWriter, parse_line, utc_ms
from .config import Config
from .detect.engine import DetectionEngine
from .detect.evaluate import evaluate
from .detect.rules import default_rules, load_rules
from .feeds import LeakIndex, load_context, load_leak_feed
from .fixturedata import load_users, write_fixtures
from .oauth.http import HttpServer
from .oauth.servers import AuthorizationServer, ClientApp, ResourceServer
from .oauth.store import GRANT_AUTHORIZATION_CODE, GRANT_IMPLICIT, IdentityStore
from .service.api import SituationalApi
from .service.store import EventStore
from .simulate.runner import ScenarioRunner, Targets
from .simulate.scenarios import build_steps, catalog

CLIENT_CODE_IP = "10.0.1.10"
CLIENT_IMPLICIT_IP = "10.0.1.11"
CLIENT_CODE_AGENT = "oauth-web-client/1.0 (authorization-code)"
CLIENT_IMPLICIT_AGENT = "oauth-spa-client/1.0 (implicit)"


class TestbedError(RuntimeError):
    __test__ = False  # not a pytest class despite the name
    pass


class TestbedBusy(TestbedError):
    __test__ = False
    pass


class Testbed:
    """up() -> running system; run_scenario() drives traffic; down() stops."""

    __test__ = False  # not a pytest class despite the name

    def __init__(self, config: Config | None = None):
        self.config = config or Config()
        self._is_up = False
        self._run_lock = threading.Lock()
        self._stop_tail = threading.Event()
        self._tail_thread: threading.Thread | None = None
        self.readiness: dict[str, dict] = {}

    # -- lifecycle ---------------------------------------------------------

    def up(self) -> dict[str, dict]:
        if self._is_up:
            return self.readiness
        cfg = self.config
        run_dir = Path(cfg.run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        fixtures_dir = Path(cfg.fixtures_dir)
        if not (fixtures_dir / "users.jsonl").exists():
            write_fixtures(fixtures_dir)

        self.writer = LogWriter(cfg.log_path)
        self.store = IdentityStore(
            seed=cfg.seed,
            code_ttl_seconds=cfg.code_ttl_seconds,
            token_ttl_seconds=cfg.token_ttl_seconds,
        )
        users = load_users(fixtures_dir / "users.jsonl")
        for row in users:
            self.store.add_user(row["username"], row["password"], row["email"])
        self._first_user = self.store.get_user(users[0]["username"])

        rules_path = Path(cfg.rules_path) if cfg.rules_path else fixtures_dir / "rules.json"
        rules = load_rules(rules_path) if rules_path.exists() else default_rules()
        leak_index = (
            load_leak_feed(cfg.leaks_path) if Path(cfg.leaks_path).exists() else LeakIndex.empty()
        )
        wordlist = []
        if Path(cfg.wordlist_path).exists():
            wordlist = Path(cfg.wordlist_path).read_text(encoding="utf-8").split()
        self.graph = load_context(cfg.context_path) if Path(cfg.context_path).exists() else None

        self.engine = DetectionEngine(
            rules,
            leak_index=leak_index,
            wordlist=wordlist,
            resolver=self.store.resolve_principal,
        )
        self.event_store = EventStore(run_dir)
        prior_state = self.event_store.load_engine_state()
        if prior_state:
            self.engine.load_state(prior_state)
        prior_events = self.event_store.load_events()
        if prior_events:
            self.engine.adopt_events(prior_events)

        started: list[HttpServer] = []
        try:
            self.auth_http = self._listen(
                "authorization_server", AuthorizationServer(self.store).handle, cfg.auth_port, started
            )
            self.resource_http = self._listen(
                "resource_server", ResourceServer(self.store).handle, cfg.resource_port, started
            )

            self.client_code = ClientApp(
                name="client-code",
                grant_type=GRANT_AUTHORIZATION_CODE,
                auth_base=self.auth_http.base_url,
                resource_base=self.resource_http.base_url,
                source_ip=CLIENT_CODE_IP,
                source_port=40310,
                user_agent=CLIENT_CODE_AGENT,
            )
            self.client_implicit = ClientApp(
                name="client-implicit",
                grant_type=GRANT_IMPLICIT,
                auth_base=self.auth_http.base_url,
                resource_base=self.resource_http.base_url,
                source_ip=CLIENT_IMPLICIT_IP,
                source_port=40311,
                user_agent=CLIENT_IMPLICIT_AGENT,
            )
            self.client_code_http = self._listen(
                "client_code", self.client_code.handle, cfg.client_code_port, started
            )
            self.client_implicit_http = self._listen(
                "client_implicit", self.client_implicit.handle, cfg.client_implicit_port, started
            )

            reg_code = self.store.register_client(
                self._first_user,
                [f"{self.client_code_http.base_url}/cb"],
                allowed_grants=frozenset({GRANT_AUTHORIZATION_CODE}),
                now=self._virtual_clock_start(),
            )
            reg_implicit = self.store.register_client(
                self._first_user,
                [f"{self.client_implicit_http.base_url}/cb"],
                allowed_grants=frozenset({GRANT_IMPLICIT}),
                now=self._virtual_clock_start(),
            )
            self.client_code.configure(
                reg_code.client_id, reg_code.client_secret, reg_code.redirect_uris[0]
            )
            self.client_implicit.configure(
                reg_implicit.client_id, reg_implicit.client_secret, reg_implicit.redirect_uris[0]
            )

            static_dir = Path(__file__).resolve().parents[2] / "frontend" / "dist"
            self.api = SituationalApi(
                self.engine,
                self.event_store,
                api_token=cfg.api_token,
                graph=self.graph,
                resolver=self.store.resolve_principal,
                scenario_catalog=catalog(),
                scenario_executor=self.run_scenario,
                static_dir=static_dir if static_dir.is_dir() else None,
            )
            self.api_http = HttpServer(
                "situational_api", self.api.handle, cfg.host, cfg.api_port, log_writer=None
            )
            started.append(self.api_http)
        except OSError as exc:
            for server in started:
                server.stop()
            raise TestbedError(str(exc)) from exc

        for server in started:
            server.start()

        self._clock = self._virtual_clock_start()
        self._tailer = LogTailer(cfg.log_path)
        self._stop_tail.clear()
        self._tail_thread = threading.Thread(target=self._tail_loop, name="engine-tail", daemon=True)
        self._tail_thread.start()

        self.readiness = {
            "authorization_server": {"ready": True, "url": self.auth_http.base_url},
            "resource_server": {"ready": True, "url": self.resource_http.base_url},
            "client_code": {"ready": True, "url": self.client_code_http.base_url},
            "client_implicit": {"ready": True, "url": self.client_implicit_http.base_url},
            "situational_api": {"ready": True, "url": self.api_http.base_url},
            "access_log": {"ready": Path(cfg.log_path).exists(), "path": cfg.log_path},
            "detection_engine": {"ready": True, "offset": self.engine.offset},
        }
        self._write_handle_file()
        self._is_up = True
        return self.readiness

    def _listen(self, name: str, handler, port: int, started: list) -> HttpServer:
        try:
            server = HttpServer(
                name,
                handler,
                self.config.host,
                port,
                log_writer=self.writer,
                trust_harness_headers=self.config.trust_harness_headers,
            )
        except OSError:
            for other in started:
                other.stop()
            raise
        started.append(server)
        return server

    def _virtual_clock_start(self) -> datetime:
        base = self.config.virtual_base
        last = self._last_log_timestamp()
        if last is not None and last >= base:
            return last + timedelta(seconds=1)
        return base

    def _last_log_timestamp(self) -> datetime | None:
        path = Path(self.config.log_path)
        if not path.exists() or path.stat().st_size == 0:
            return None
        last_line = None
        with open(path, "rb") as fh:
            for raw in fh:
                if raw.endswith(b"\n"):
                    last_line = raw
        if not last_line:
            return None
        try:
            return parse_line(last_line.decode("utf-8")).timestamp
        except (ValueError, UnicodeDecodeError):
            return None

    def _tail_loop(self) -> None:
        while not self._stop_tail.is_set():
            self._drain_once()
            self._stop_tail.wait(0.025)
        self._drain_once()

    def _drain_once(self) -> None:
        touched = self.engine.process_available(self._tailer)
        for event in touched:
            self.event_store.record_event(event)

    def _write_handle_file(self) -> None:
        handle = {
            "pid": os.getpid(),
            "auth_base": self.auth_http.base_url,
            "resource_base": self.resource_http.base_url,
            "client_code_base": self.client_code_http.base_url,
            "client_implicit_base": self.client_implicit_http.base_url,
            "api_base": self.api_http.base_url,
            "api_token": self.config.api_token,
            "client_id_code": self.client_code.client_id,
            "client_id_implicit": self.client_implicit.client_id,
            "redirect_uri_code": self.client_code.redirect_uri,
            "redirect_uri_implicit": self.client_implicit.redirect_uri,
            "log_path": self.config.log_path,
            "run_dir": self.config.run_dir,
        }
        (Path(self.config.run_dir) / "testbed.json").write_text(
            json.dumps(handle, indent=2) + "\n", encoding="utf-8"
        )

    def down(self) -> None:
        """Graceful stop: servers, engine drain, API; double down is a no-op."""
        if not self._is_up:
            return
        got_lock = self._run_lock.acquire(timeout=30)
        try:
            self.api.stopping.set()
            for server in (self.auth_http, self.resource_http, self.client_code_http, self.client_implicit_http):
                server.stop()
            self._stop_tail.set()
            if self._tail_thread is not None:
                self._tail_thread.join(timeout=10)
                self._tail_thread = None
            self.event_store.write_engine_state(self.engine.state_dict())
            self.event_store.write_snapshot(self.engine.events, self.engine.state_dict())
            self.api_http.stop()
            self.writer.close()
        finally:
            if got_lock:
                self._run_lock.release()
        self._is_up = False

    # -- traffic ------------------------------------------------------------

    def targets(self) -> Targets:
        return Targets(
            auth=self.auth_http.base_url,
            resource=self.resource_http.base_url,
            client_code=self.client_code_http.base_url,
            client_implicit=self.client_implicit_http.base_url,
            client_id_code=self.client_code.client_id,
            client_id_implicit=self.client_implicit.client_id,
            redirect_uri_code=self.client_code.redirect_uri,
            redirect_uri_implicit=self.client_implicit.redirect_uri,
            log_path=self.config.log_path,
        )

    def run_scenario(self, name: str, seed: int):
        """Execute one scenario; exclusive, engine drained before returning."""
        if not self._is_up:
            raise TestbedError("testbed is not up")
        if not self._run_lock.acquire(blocking=False):
            raise TestbedBusy("a scenario run is already in progress")
        try:
            # out-of-band traffic may have advanced the log beyond the clock
            last = self._last_log_timestamp()
            if last is not None and last >= self._clock:
                self._clock = last + timedelta(seconds=1)
            runner = ScenarioRunner(self.targets(), anchor=self._clock)
            report = runner.run(name, seed)
            max_ms = max((s.at_ms for s in build_steps(name, seed)), default=0)
            self._clock = self._clock + timedelta(milliseconds=max_ms + 1000)
            self.wait_drained()
            return report
        finally:
            self._run_lock.release()

    def wait_drained(self, timeout: float = 15.0) -> None:
        deadline = utc_ms().timestamp() + timeout
        target = self.writer.size()
        while utc_ms().timestamp() < deadline:
            if self.engine.offset >= target:
                return
            threading.Event().wait(0.01)
        raise TestbedError(f"engine did not drain to offset {target} within {timeout}s")

    def events_in_span(self, span: tuple[int, int]) -> list:
        start, end = span
        with self.engine.lock:
            return [
                ev
                for ev in self.engine.events
                if any(start <= off < end for off in ev.evidence_offsets())
            ]

    def report(self, report) -> dict:
        """Bind a scenario report's ground truth to the engine's events."""
        events = self.events_in_span(report.log_span)
        return evaluate(report.labels, events)
