"""End-to-end command behavior and the exit-code contract."""

from __future__ import annotations

import json
import sys

import pytest

from rastrodm.cli import main
from rastrodm.store import TrailStore
from tests.conftest import build_classifier_trail, pm_samples, simple_training


@pytest.fixture
def project(tmp_path):
    root = tmp_path / "trail"
    assert main(["init", "--dir", str(root), "--name", "demo"]) == 0
    return root


def run_cli(capsys, *argv):
    exit_code = main(list(argv))
    captured = capsys.readouterr()
    return exit_code, captured.out, captured.err


class TestInit:
    def test_creates_project_metadata(self, tmp_path, capsys):
        root = tmp_path / "t"
        code, out, _err = run_cli(capsys, "init", "--dir", str(root), "--name", "demo")
        assert code == 0
        assert "demo" in out
        assert (root / "project.json").exists()

    def test_idempotent(self, project, capsys):
        code, _out, _err = run_cli(capsys, "init", "--dir", str(project))
        assert code == 0

    def test_other_commands_require_existing_project(self, tmp_path, capsys):
        code, _out, err = run_cli(
            capsys, "query", "training", "--dir", str(tmp_path / "nowhere")
        )
        assert code == 1
        assert "rastro init" in err


class TestActionAdd:
    def test_prints_code_and_appends_one_line(self, project, capsys):
        code, out, _err = run_cli(
            capsys,
            "action", "add", "--dir", str(project),
            "-m", "Experimenting with MLP columns no longer binary",
            "--task", "Format Data",
        )
        assert code == 0
        assert out.strip() == "1"
        lines = (project / "actions.jsonl").read_text(encoding="utf-8").splitlines()
        assert len(lines) == 1
        stored = json.loads(lines[0])
        assert stored["task"] == {"phase": "data-preparation", "task": "format data"}

    def test_redundancy_warning_printed_but_commit_proceeds(self, project, capsys):
        run_cli(capsys, "action", "add", "--dir", str(project), "-m", "include file names in the model")
        code, out, err = run_cli(
            capsys, "action", "add", "--dir", str(project),
            "-m", "include file names in the model",
        )
        assert code == 0
        assert out.strip() == "2"
        assert "warning: similar action [1]" in err

    def test_strict_blocks_redundant_registration(self, project, capsys):
        run_cli(capsys, "action", "add", "--dir", str(project), "-m", "include file names in the model")
        code, _out, err = run_cli(
            capsys, "action", "add", "--dir", str(project),
            "-m", "include file names in the model", "--strict",
        )
        assert code == 1
        assert "strict" in err
        lines = (project / "actions.jsonl").read_text(encoding="utf-8").splitlines()
        assert len(lines) == 1


class TestLessonAdd:
    def test_empty_message_exits_one_and_writes_nothing(self, project, capsys):
        code, _out, err = run_cli(
            capsys, "lesson", "add", "--dir", str(project), "-m", "   "
        )
        assert code == 1
        assert "error" in err
        assert not (project / "lessons.jsonl").exists()

    def test_related_codes_are_checked(self, project, capsys):
        code, _out, err = run_cli(
            capsys, "lesson", "add", "--dir", str(project), "-m", "x", "--related", "42"
        )
        assert code == 1
        assert "unknown training codes" in err

    def test_lesson_with_task_registered(self, project, capsys):
        code, out, _err = run_cli(
            capsys, "lesson", "add", "--dir", str(project),
            "-m", "separate fit from transform", "--task", "Format Data",
        )
        assert code == 0
        assert out.strip() == "1"


class TestRun:
    def test_successful_command(self, project, capsys):
        code, out, _err = run_cli(
            capsys, "run", "--dir", str(project), "--algorithm", "MLP",
            "--param", "batch_size=256", "--param", "optimizer=Adam",
            "--", sys.executable, "-c", "pass",
        )
        assert code == 0
        training_code = int(out.strip())
        store = TrailStore.open_or_init(project)
        stored = store.read("training", training_code)
        assert stored.training_params.hyperparameters == {
            "batch_size": 256, "optimizer": "Adam"
        }
        assert stored.context.status.value == "succeeded"

    def test_failing_command_exits_nonzero_but_registers(self, project, capsys):
        code, out, _err = run_cli(
            capsys, "run", "--dir", str(project),
            "--", sys.executable, "-c", "import sys; sys.exit(3)",
        )
        assert code == 1
        assert out.strip() == "1"

    def test_missing_command_is_user_error(self, project, capsys):
        code, _out, err = run_cli(capsys, "run", "--dir", str(project), "--")
        assert code == 1
        assert "no command" in err


class TestQuery:
    def test_predicate_filters(self, project, capsys):
        store = TrailStore.open_or_init(project)
        store.append(simple_training("MLP", 0.91))
        store.append(simple_training("LGBMClassifier", 0.89))
        code, out, _err = run_cli(
            capsys, "query", "--dir", str(project), "training",
            "training_params.algorithm", "=", "MLP",
        )
        assert code == 0
        assert len(out.strip().splitlines()) == 1
        assert "algorithm=MLP" in out

    def test_json_output_uses_store_field_names(self, project, capsys):
        store = TrailStore.open_or_init(project)
        store.append(simple_training("MLP", 0.91))
        code, out, _err = run_cli(capsys, "query", "training", "--json", "--dir", str(project))
        assert code == 0
        payload = json.loads(out)
        assert payload[0]["schema_version"] == 1
        assert payload[0]["training_params"]["algorithm"] == "MLP"
        assert payload[0]["results"]["metrics"]["accuracy"] == {"scalar": 0.91}

    def test_bad_predicate_is_user_error(self, project, capsys):
        code, _out, err = run_cli(
            capsys, "query", "--dir", str(project), "training", "path", "@@", "x"
        )
        assert code == 1
        assert "operator" in err


class TestStats:
    def test_one_summary_row_per_algorithm(self, project, capsys):
        store = TrailStore.open_or_init(project)
        store.append(simple_training("MLP", pm_samples(0.911, 0.003)))
        store.append(simple_training("LGBMClassifier", pm_samples(0.891, 0.004)))
        code, out, _err = run_cli(
            capsys, "stats", "--dir", str(project),
            "--group-by", "training_params.algorithm", "--metric", "results.accuracy",
        )
        assert code == 0
        lines = out.strip().splitlines()
        assert lines[0].startswith("LGBMClassifier: n=14 mean=0.891")
        assert lines[1].startswith("MLP: n=14 mean=0.911")
        assert lines[2] == "skipped: 0"

    def test_json_output(self, project, capsys):
        store = TrailStore.open_or_init(project)
        store.append(simple_training("MLP", 0.9))
        code, out, _err = run_cli(
            capsys, "stats", "--json", "--dir", str(project),
            "--group-by", "training_params.algorithm", "--metric", "results.accuracy",
        )
        payload = json.loads(out)
        assert payload["groups"]["MLP"]["n"] == 1
        assert payload["skipped"] == 0


class TestReportAndExport:
    def test_task_report_to_stdout(self, tmp_path, capsys):
        store = build_classifier_trail(tmp_path / "trail")
        code, out, _err = run_cli(
            capsys, "report", "--dir", str(store.root), "--task", "Select Data"
        )
        assert code == 0
        assert out.startswith("# Task report: select data")

    def test_chronology_to_stdout(self, tmp_path, capsys):
        store = build_classifier_trail(tmp_path / "trail")
        code, out, _err = run_cli(capsys, "report", "--dir", str(store.root), "--chronology")
        assert code == 0
        assert out.startswith("# Chronology")

    def test_export_mlschema(self, tmp_path, capsys):
        store = build_classifier_trail(tmp_path / "trail")
        code, out, _err = run_cli(
            capsys, "export", "--dir", str(store.root), "--mlschema", "2"
        )
        assert code == 0
        doc = json.loads(out)
        assert doc["Run"]["Algorithm"]["name"] == "MLP"

    def test_export_unknown_code_is_user_error(self, project, capsys):
        code, _out, err = run_cli(capsys, "export", "--dir", str(project), "--mlschema", "9")
        assert code == 1
        assert "no training" in err


class TestSynthesize:
    def test_equal_metrics_candidate_from_cli(self, project, capsys):
        store = TrailStore.open_or_init(project)
        from rastrodm.core import MetricResult

        for i in range(3):
            store.append(
                simple_training(
                    metrics={
                        "accuracy": MetricResult(scalar=0.9 + i * 1e-3),
                        "f1_micro": MetricResult(scalar=0.9 + i * 1e-3),
                    }
                )
            )
        code, out, _err = run_cli(capsys, "synthesize", "--dir", str(project), "--json")
        assert code == 0
        payload = json.loads(out)
        assert payload[0]["kind"] == "equal-metrics"
        assert payload[0]["evidence"] == [1, 2, 3]

    def test_best_setting_via_flags(self, project, capsys):
        store = TrailStore.open_or_init(project)
        for optimizer, value in (("Adam", 0.911), ("Rmsprop", 0.909)):
            store.append(
                simple_training("MLP", value, hyperparameters={"optimizer": optimizer})
            )
        code, out, _err = run_cli(
            capsys, "synthesize", "--dir", str(project),
            "--kind", "best-setting", "--param", "training_params.optimizer",
        )
        assert code == 0
        assert "best-setting: Best training_params.optimizer so far: Adam" in out

    def test_improvement_requires_varied_key(self, project, capsys):
        code, _out, err = run_cli(
            capsys, "synthesize", "--dir", str(project), "--kind", "improvement"
        )
        assert code == 1
        assert "--varied-key" in err


class TestMonitor:
    def test_healthy_series(self, tmp_path, capsys):
        series = tmp_path / "series.json"
        series.write_text(json.dumps([["2019-08-01", 0.91], ["2019-08-02", 0.905]]))
        code, out, _err = run_cli(
            capsys, "monitor", "--baseline", "0.911", "--threshold", "0.02",
            "--series", str(series),
        )
        assert code == 0
        assert out.splitlines()[0] == "healthy"

    def test_degraded_series_flags_point(self, tmp_path, capsys):
        series = tmp_path / "series.json"
        series.write_text(
            json.dumps(
                [
                    {"timestamp": "2019-08-01", "accuracy": 0.91},
                    {"timestamp": "2019-08-02", "accuracy": 0.88},
                ]
            )
        )
        code, out, _err = run_cli(
            capsys, "monitor", "--baseline", "0.911", "--threshold", "0.02",
            "--series", str(series),
        )
        assert code == 0
        lines = out.splitlines()
        assert lines[0] == "degraded"
        assert lines[1] == "flagged: 2019-08-02 0.88"

    def test_missing_series_file_is_io_error(self, tmp_path, capsys):
        code, _out, err = run_cli(
            capsys, "monitor", "--baseline", "0.9", "--threshold", "0.02",
            "--series", str(tmp_path / "none.json"),
        )
        assert code == 2


class TestExitCodes:
    def test_corrupt_store_is_exit_two(self, project, capsys):
        run_cli(capsys, "action", "add", "--dir", str(project), "-m", "a")
        path = project / "actions.jsonl"
        path.write_text("garbage\n" + path.read_text(encoding="utf-8"), encoding="utf-8")
        code, _out, err = run_cli(capsys, "query", "action", "--dir", str(project))
        assert code == 2
        assert "actions.jsonl:1" in err

    def test_env_variable_selects_project(self, project, capsys, monkeypatch):
        monkeypatch.setenv("RASTRO_DIR", str(project))
        code, out, _err = run_cli(capsys, "action", "add", "-m", "env routed")
        assert code == 0
        assert out.strip() == "1"
