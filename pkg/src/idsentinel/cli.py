"""Command-line entry point.

Exit codes: 0 ok, 1 configuration problem, 2 runtime failure,
3 evaluation below threshold.
"""

from __future__ import annotations

import json
import signal
import sys
import time
from pathlib import Path

import click

from . import httpclient
from .accesslog import LogTailer
from .config import Config, load_config
from .detect.engine import DetectionEngine
from .detect.evaluate import evaluate, format_report
from .detect.rules import default_rules, load_rules
from .feeds import FeedLoadError, LeakIndex, load_context, load_leak_feed
from .fixturedata import write_fixtures
from .orchestrator import Testbed, TestbedError
from .simulate.runner import ScenarioRunner, ScenarioAbort, Targets, export_ground_truth, load_ground_truth
from .simulate.scenarios import catalog

EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_EVALUATION = 3


@click.group()
def cli():
    """Identity-security testbed: OAuth servers, scripted attacks, detection."""


def _load_config(config_path: str | None, run_dir: str | None) -> Config:
    overrides = {"run_dir": run_dir} if run_dir else None
    return load_config(config_path, overrides)


@cli.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--run-dir", default=None, help="working directory for log, state, handle file")
def up(config_path, run_dir):
    """Start all components and serve until interrupted."""
    try:
        cfg = _load_config(config_path, run_dir)
        testbed = Testbed(cfg)
        readiness = testbed.up()
    except (TestbedError, ValueError, OSError) as exc:
        click.echo(f"startup failed: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    for name, info in readiness.items():
        click.echo(f"ready {name}: {info.get('url') or info.get('path') or ''}")
    click.echo(f"handle file: {Path(cfg.run_dir) / 'testbed.json'}")

    stop = {"flag": False}

    def _stop(signum, frame):
        stop["flag"] = True

    signal.signal(signal.SIGINT, _stop)
    signal.signal(signal.SIGTERM, _stop)
    while not stop["flag"]:
        time.sleep(0.2)
    testbed.down()
    click.echo("stopped")


@cli.command()
@click.option("--state", default="./run/testbed.json", type=click.Path())
def down(state):
    """Stop a testbed started with `up` (no-op when already down)."""
    path = Path(state)
    if not path.exists():
        click.echo("already down (no handle file)")
        return
    doc = json.loads(path.read_text(encoding="utf-8"))
    pid = doc.get("pid")
    import os

    try:
        os.kill(pid, signal.SIGTERM)
    except (ProcessLookupError, TypeError):
        click.echo("already down")
        return
    for _ in range(100):
        try:
            os.kill(pid, 0)
        except ProcessLookupError:
            break
        time.sleep(0.1)
    click.echo(f"stopped pid {pid}")


def _api_call(base: str, token: str, method: str, path: str, body: dict | None = None):
    headers = [("Authorization", f"Bearer {token}")]
    data = None
    if body is not None:
        headers.append(("Content-Type", "application/json"))
        data = json.dumps(body).encode("utf-8")
    resp = httpclient.request(base, method, path, headers=headers, body=data)
    return resp.status, resp.json()


@cli.command()
@click.argument("scenario")
@click.option("--seed", default=42, type=int)
@click.option("--state", default="./run/testbed.json", type=click.Path(exists=True))
@click.option("--labels-out", default=None, type=click.Path())
def run(scenario, seed, state, labels_out):
    """Trigger a scenario on a running testbed via the situational API."""
    doc = json.loads(Path(state).read_text(encoding="utf-8"))
    base, token = doc["api_base"], doc["api_token"]
    try:
        status, body = _api_call(base, token, "POST", f"/scenarios/{scenario}:run", {"seed": seed})
    except httpclient.TargetUnreachable as exc:
        click.echo(f"API unreachable: {exc}", err=True)
        sys.exit(EXIT_RUNTIME)
    if status != 202:
        click.echo(f"run rejected: {body}", err=True)
        sys.exit(EXIT_RUNTIME)
    run_id = body["run_id"]
    while True:
        status, body = _api_call(base, token, "GET", f"/scenarios/runs/{run_id}")
        if body["status"] != "running":
            break
        time.sleep(0.2)
    if body["status"] == "error":
        click.echo(f"scenario failed: {body.get('error')}", err=True)
        sys.exit(EXIT_RUNTIME)
    report = body["report"]
    click.echo(
        f"{scenario} seed={seed}: {report['request_count']} requests, "
        f"log span {report['log_span'][0]}..{report['log_span'][1]}"
    )
    if labels_out:
        with open(labels_out, "w", encoding="utf-8") as fh:
            for row in report["labels"]:
                fh.write(json.dumps(row, ensure_ascii=False) + "\n")
        click.echo(f"labels written to {labels_out}")


@cli.command()
@click.argument("scenario")
@click.option("--seed", default=42, type=int)
@click.option("--target", default="./run/testbed.json", help="testbed handle file (or JSON map)")
@click.option("--labels-out", default=None, type=click.Path())
def simulate(scenario, seed, target, labels_out):
    """Drive a scenario directly against server base URIs (no API)."""
    try:
        if target.strip().startswith("{"):
            doc = json.loads(target)
            targets = Targets(**doc)
        else:
            targets = Targets.from_state_file(target)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        click.echo(f"bad --target: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    anchor = _anchor_for(targets.log_path)
    runner = ScenarioRunner(targets, anchor=anchor)
    try:
        report = runner.run(scenario, seed)
    except KeyError as exc:
        click.echo(f"unknown scenario: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    except (ScenarioAbort, httpclient.TargetUnreachable) as exc:
        click.echo(f"aborted: {exc}", err=True)
        sys.exit(EXIT_RUNTIME)
    click.echo(f"{scenario}: {report.request_count} requests sent")
    if labels_out:
        export_ground_truth(report, labels_out)
        click.echo(f"labels written to {labels_out}")


def _anchor_for(log_path: str):
    from .accesslog import utc_ms, parse_line

    if log_path and Path(log_path).exists():
        last = None
        with open(log_path, "rb") as fh:
            for raw in fh:
                if raw.endswith(b"\n"):
                    last = raw
        if last:
            try:
                from datetime import timedelta

                return parse_line(last.decode("utf-8")).timestamp + timedelta(seconds=1)
            except ValueError:
                pass
    return utc_ms()


@cli.command()
@click.option("--log", "log_path", required=True, type=click.Path(exists=True))
@click.option("--rules", "rules_path", default=None, type=click.Path(exists=True))
@click.option("--from-offset", default=0, type=int)
@click.option("--events-out", default=None, type=click.Path())
@click.option("--leaks", default=None, type=click.Path(exists=True))
@click.option("--wordlist", default=None, type=click.Path(exists=True))
def detect(log_path, rules_path, from_offset, events_out, leaks, wordlist):
    """Offline detection over an existing log file."""
    try:
        rules = load_rules(rules_path) if rules_path else default_rules()
        leak_index = load_leak_feed(leaks) if leaks else LeakIndex.empty()
        words = Path(wordlist).read_text(encoding="utf-8").split() if wordlist else []
    except (FeedLoadError, ValueError) as exc:
        click.echo(f"bad input: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    engine = DetectionEngine(rules, leak_index=leak_index, wordlist=words)
    engine.offset = from_offset
    tailer = LogTailer(log_path)
    try:
        engine.process_available(tailer)
    except ValueError as exc:
        click.echo(f"detection failed: {exc}", err=True)
        sys.exit(EXIT_RUNTIME)
    snap = engine.snapshot()
    click.echo(
        f"parsed={snap['counters']['lines_parsed']} malformed={snap['counters']['lines_malformed']} "
        f"events={snap['events']['total']}"
    )
    for cls, count in sorted(snap["events"]["by_class"].items()):
        click.echo(f"  {cls}: {count}")
    if events_out:
        with open(events_out, "w", encoding="utf-8") as fh:
            for event in engine.events:
                fh.write(json.dumps(event.to_json(), ensure_ascii=False) + "\n")
        click.echo(f"events written to {events_out}")


@cli.command()
@click.option("--labels", required=True, type=click.Path(exists=True))
@click.option("--events", "events_path", required=True, type=click.Path(exists=True))
@click.option("--min-precision", default=0.9, type=float)
@click.option("--min-recall", default=0.9, type=float)
def report(labels, events_path, min_precision, min_recall):
    """Precision/recall of an events file against a ground-truth labels file."""
    rows = load_ground_truth(labels)
    events = []
    with open(events_path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                events.append(json.loads(line))
    result = evaluate(rows, events)
    click.echo(format_report(result))
    for cls, row in result["per_class"].items():
        if row["labels"] and (row["precision"] < min_precision or row["recall"] < min_recall):
            click.echo(f"below threshold: {cls}", err=True)
            sys.exit(EXIT_EVALUATION)


@cli.group()
def feeds():
    """Perception feed utilities."""


@feeds.command("validate")
@click.argument("path", type=click.Path(exists=True))
def feeds_validate(path):
    """Validate a leak feed (.jsonl) or context document (.yaml/.json)."""
    try:
        if path.endswith(".jsonl"):
            index = load_leak_feed(path)
            click.echo(f"ok: {len(index)} unique leak pairs ({index.duplicate_count} duplicates)")
        else:
            graph = load_context(path)
            click.echo(
                f"ok: {len(graph.users)} users, {len(graph.roles)} roles, "
                f"{len(graph.permissions)} permissions, {len(graph.systems)} systems"
            )
    except (FeedLoadError, OSError) as exc:
        click.echo(f"invalid: {exc}", err=True)
        sys.exit(EXIT_CONFIG)


@cli.command()
@click.option("--out", default="./fixtures", type=click.Path())
def fixtures(out):
    """Write the bundled fixture files (users, leaks, wordlist, context, rules)."""
    written = write_fixtures(out)
    for path in written:
        click.echo(f"wrote {path}")


@cli.command("catalog")
def catalog_cmd():
    """List available scenarios."""
    for entry in catalog():
        click.echo(f"{entry['name']:<22} {entry['description']}")


def main():
    try:
        cli(standalone_mode=False)
    except click.UsageError as exc:
        click.echo(str(exc), err=True)
        sys.exit(EXIT_CONFIG)
    except click.ClickException as exc:
        exc.show()
        sys.exit(EXIT_CONFIG)
    except click.exceptions.Abort:
        sys.exit(EXIT_RUNTIME)


if __name__ == "__main__":
    main()
