"""CLI verbs: offline detect, report thresholds and exit codes, feeds, simulate."""

from __future__ import annotations

import json

import pytest
from click.testing import CliRunner

from idsentinel.cli import EXIT_CONFIG, EXIT_EVALUATION, cli
from idsentinel.fixturedata import write_fixtures


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def fixtures_dir(tmp_path):
    target = tmp_path / "fixtures"
    write_fixtures(target)
    return target


def _scenario_artifacts(testbed, tmp_path, name="brute_force", seed=7):
    report = testbed.run_scenario(name, seed)
    labels = tmp_path / "labels.jsonl"
    events = tmp_path / "events.jsonl"
    with open(labels, "w") as fh:
        for row in report.labels:
            fh.write(json.dumps(row) + "\n")
    with open(events, "w") as fh:
        for ev in testbed.engine.events:
            fh.write(json.dumps(ev.to_json()) + "\n")
    return report, labels, events


class TestCatalogAndFixtures:
    def test_catalog_lists_scenarios(self, runner):
        result = runner.invoke(cli, ["catalog"])
        assert result.exit_code == 0
        assert "token_replay" in result.output
        assert "mixed_day" in result.output

    def test_fixtures_written(self, runner, tmp_path):
        result = runner.invoke(cli, ["fixtures", "--out", str(tmp_path / "fx")])
        assert result.exit_code == 0
        assert (tmp_path / "fx" / "leaks.jsonl").exists()
        assert (tmp_path / "fx" / "rules.json").exists()


class TestFeedsValidate:
    def test_valid_leaks(self, runner, fixtures_dir):
        result = runner.invoke(cli, ["feeds", "validate", str(fixtures_dir / "leaks.jsonl")])
        assert result.exit_code == 0
        assert "15 unique" in result.output

    def test_valid_context(self, runner, fixtures_dir):
        result = runner.invoke(cli, ["feeds", "validate", str(fixtures_dir / "context.yaml")])
        assert result.exit_code == 0
        assert "10 users" in result.output

    def test_invalid_feed_exits_config(self, runner, tmp_path):
        bad = tmp_path / "bad.jsonl"
        bad.write_text("nope\n")
        result = runner.invoke(cli, ["feeds", "validate", str(bad)])
        assert result.exit_code == EXIT_CONFIG


class TestOfflineDetect:
    def test_detect_over_existing_log(self, runner, testbed, tmp_path, fixtures_dir):
        testbed.run_scenario("brute_force", 7)
        events_out = tmp_path / "events.jsonl"
        result = runner.invoke(
            cli,
            [
                "detect",
                "--log", testbed.config.log_path,
                "--rules", str(fixtures_dir / "rules.json"),
                "--events-out", str(events_out),
            ],
        )
        assert result.exit_code == 0, result.output
        assert "brute_force: 1" in result.output
        rows = [json.loads(l) for l in events_out.read_text().splitlines()]
        assert rows[0]["attack_class"] == "brute_force"

    def test_detect_from_offset_skips_earlier_lines(self, runner, testbed):
        report = testbed.run_scenario("brute_force", 7)
        result = runner.invoke(
            cli,
            ["detect", "--log", testbed.config.log_path, "--from-offset", str(report.log_span[1])],
        )
        assert result.exit_code == 0
        assert "events=0" in result.output.replace(" ", "") or "events=0" in result.output


class TestReport:
    def test_report_passes_at_full_quality(self, runner, testbed, tmp_path):
        _, labels, events = _scenario_artifacts(testbed, tmp_path)
        result = runner.invoke(cli, ["report", "--labels", str(labels), "--events", str(events)])
        assert result.exit_code == 0, result.output
        assert "brute_force" in result.output

    def test_report_exit_three_below_threshold(self, runner, testbed, tmp_path):
        _, labels, _ = _scenario_artifacts(testbed, tmp_path)
        empty = tmp_path / "none.jsonl"
        empty.write_text("")
        result = runner.invoke(cli, ["report", "--labels", str(labels), "--events", str(empty)])
        assert result.exit_code == EXIT_EVALUATION


class TestSimulate:
    def test_simulate_against_running_testbed(self, runner, testbed, tmp_path):
        labels_out = tmp_path / "labels.jsonl"
        state_file = f"{testbed.config.run_dir}/testbed.json"
        result = runner.invoke(
            cli,
            ["simulate", "stolen_token_curl", "--seed", "3",
             "--target", state_file, "--labels-out", str(labels_out)],
        )
        assert result.exit_code == 0, result.output
        assert labels_out.exists()
        testbed.wait_drained()
        assert any(e.attack_class == "suspicious_agent" for e in testbed.engine.events)

    def test_simulate_bad_target_exits_config(self, runner, tmp_path):
        result = runner.invoke(
            cli, ["simulate", "brute_force", "--target", str(tmp_path / "missing.json")]
        )
        assert result.exit_code == EXIT_CONFIG

    def test_run_command_against_live_api(self, runner, testbed, tmp_path):
        state_file = f"{testbed.config.run_dir}/testbed.json"
        labels_out = tmp_path / "labels.jsonl"
        result = runner.invoke(
            cli,
            ["run", "xss_probe", "--seed", "5", "--state", state_file,
             "--labels-out", str(labels_out)],
        )
        assert result.exit_code == 0, result.output
        assert "requests" in result.output
        assert labels_out.exists()
        assert any(e.attack_class == "xss_probe" for e in testbed.engine.events)
