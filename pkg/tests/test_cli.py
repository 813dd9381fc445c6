from __future__ import annotations

import json

import pytest

from bpmnkit.cli import EXIT_FAILURE, EXIT_NONCOMPLIANT, EXIT_OK, main

from conftest import fixture_path


def _run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestValidate:
    def test_compliant_model_exits_zero(self, capsys):
        code, out, _ = _run(capsys, "validate", str(fixture_path("chain3.bpmn")))
        assert code == EXIT_OK
        assert json.loads(out)["compliant"] is True

    def test_seeded_defect_exits_three(self, capsys):
        code, out, _ = _run(capsys, "validate", str(fixture_path("r1_missing_default.bpmn")))
        assert code == EXIT_NONCOMPLIANT
        data = json.loads(out)
        assert data["diagnostics"][0]["code"] == "R1_DEFAULT_FLOW"

    def test_malformed_file_reports_r5_and_exits_three(self, capsys, tmp_path):
        bad = tmp_path / "bad.bpmn"
        bad.write_bytes(b"<broken")
        code, out, _ = _run(capsys, "validate", str(bad))
        assert code == EXIT_NONCOMPLIANT
        assert json.loads(out)["diagnostics"][0]["code"] == "R5_WELLFORMED"

    def test_missing_file_is_operational_failure(self, capsys, tmp_path):
        code, _, err = _run(capsys, "validate", str(tmp_path / "nope.bpmn"))
        assert code == EXIT_FAILURE
        assert "error" in err


class TestCompare:
    def test_self_compare_overall_one(self, capsys):
        path = str(fixture_path("diamond.bpmn"))
        code, out, _ = _run(capsys, "compare", path, path, "--embed-fallback")
        assert code == EXIT_OK
        data = json.loads(out)
        assert data["overall"] == pytest.approx(1.0, abs=1e-9)
        assert set(data) == {"structural", "type_distribution", "semantic_name",
                             "semantic_type", "semantic_name_type", "overall"}

    def test_flags_accepted_after_subcommand(self, capsys):
        path = str(fixture_path("chain3.bpmn"))
        code, _, _ = _run(capsys, "compare", path, path, "--embed-fallback",
                          "--jobs", "2", "--seed", "42")
        assert code == EXIT_OK


class TestUsage:
    def test_no_arguments_is_usage_error(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 2

    def test_unknown_subcommand_is_usage_error(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 2


class TestTranslateCommand:
    def test_translate_with_mock_script(self, capsys, tmp_path):
        mapping = {
            "Bestellung erhalten": "Order received",
            "Prüfen": "Check",
            "Versand vorbereiten": "Prepare shipping",
            "Bestellung abgeschlossen": "Order completed",
            "Überprüfung der eingegangenen Bestellung": "Review of the incoming order",
        }
        script = tmp_path / "script.json"
        script.write_text(json.dumps([json.dumps(mapping, ensure_ascii=False)]),
                          encoding="utf-8")
        out_file = tmp_path / "translated.bpmn"
        code, _, _ = _run(capsys, "translate", str(fixture_path("unicode.bpmn")),
                          "-o", str(out_file), "--llm-mock-script", str(script))
        assert code == EXIT_OK
        assert "Check" in out_file.read_text(encoding="utf-8")

    def test_translate_without_llm_fails_cleanly(self, capsys, tmp_path):
        code, _, err = _run(capsys, "translate", str(fixture_path("unicode.bpmn")),
                            "-o", str(tmp_path / "x.bpmn"))
        assert code == EXIT_FAILURE
        assert "no LLM configured" in err


class TestCorrectCommand:
    def test_correct_fixes_seeded_defect(self, capsys, tmp_path):
        fixed_xml = fixture_path("r1_missing_default.bpmn").read_text(encoding="utf-8")
        fixed_xml = fixed_xml.replace('id="gw_route" name="Route case"',
                                      'id="gw_route" name="Route case" default="flow_fast"')
        script = tmp_path / "script.json"
        script.write_text(json.dumps([fixed_xml]), encoding="utf-8")
        out_file = tmp_path / "fixed.bpmn"
        code, out, _ = _run(capsys, "correct", str(fixture_path("r1_missing_default.bpmn")),
                            "-o", str(out_file), "--llm-mock-script", str(script),
                            "--limit", "2")
        assert code == EXIT_OK
        assert json.loads(out)["compliant"] is True
        assert 'default="flow_fast"' in out_file.read_text(encoding="utf-8")


class TestDescribeCommand:
    def test_describe_writes_text(self, capsys, tmp_path):
        script = tmp_path / "script.json"
        script.write_text(json.dumps(["The process settles insurance claims."]))
        out_file = tmp_path / "description.txt"
        code, _, _ = _run(capsys, "describe", str(fixture_path("diamond.bpmn")),
                          "-o", str(out_file), "--llm-mock-script", str(script))
        assert code == EXIT_OK
        assert out_file.read_text() == "The process settles insurance claims."


class TestReconstructCommand:
    def test_reconstruct_from_description(self, capsys, tmp_path):
        desc = tmp_path / "description.txt"
        desc.write_text("Orders are registered, checked, and confirmed.")
        out_file = tmp_path / "reconstructed.bpmn"
        run_dir = tmp_path / "run"
        code, _, _ = _run(capsys, "reconstruct", str(desc), "-o", str(out_file),
                          "--llm-mock-script", str(fixture_path("mock_reconstruct_ok.json")),
                          "--run-dir", str(run_dir))
        assert code == EXIT_OK
        assert out_file.exists()
        assert (run_dir / "stage3.json").exists()


class TestBatchAndReport:
    def _manifest(self, tmp_path):
        entries = [
            {"model_path": str(fixture_path("order-v1.bpmn")),
             "status": "reconstructed",
             "reconstruction_path": str(fixture_path("order-v2.bpmn"))},
            {"model_path": str(fixture_path("chain3.bpmn")),
             "status": "reconstructed",
             "reconstruction_path": str(fixture_path("chain3.bpmn"))},
        ]
        path = tmp_path / "manifest.json"
        path.write_text(json.dumps({"entries": entries}))
        return path

    def test_batch_evaluate_writes_results_and_summary(self, capsys, tmp_path):
        manifest = self._manifest(tmp_path)
        code, out, _ = _run(capsys, "batch", str(manifest), "--stage", "evaluate",
                            "--embed-fallback", "--out-dir", str(tmp_path))
        assert code == EXIT_OK
        results = tmp_path / "results"
        assert (results / "summary.csv").exists()
        assert (results / "order-v1.json").exists()
        assert "metric,average_score" in out

    def test_report_renders_results_dir(self, capsys, tmp_path):
        manifest = self._manifest(tmp_path)
        _run(capsys, "batch", str(manifest), "--stage", "evaluate",
             "--embed-fallback", "--out-dir", str(tmp_path))
        out_csv = tmp_path / "summary_again.csv"
        code, _, _ = _run(capsys, "report", str(tmp_path / "results"), "-o", str(out_csv))
        assert code == EXIT_OK
        assert "Overall Similarity" in out_csv.read_text()

    def test_report_to_stdout_with_literal_format(self, capsys, tmp_path):
        manifest = self._manifest(tmp_path)
        _run(capsys, "batch", str(manifest), "--stage", "evaluate",
             "--embed-fallback", "--out-dir", str(tmp_path))
        code, out, _ = _run(capsys, "report", str(tmp_path / "results"), "-o", "json")
        assert code == EXIT_OK
        assert "averages" in json.loads(out)

    def test_batch_translate_stage_advances_manifest(self, capsys, tmp_path):
        mapping = {
            "Bestellung erhalten": "Order received",
            "Prüfen": "Check",
            "Versand vorbereiten": "Prepare shipping",
            "Bestellung abgeschlossen": "Order completed",
            "Überprüfung der eingegangenen Bestellung": "Review of the incoming order",
        }
        script = tmp_path / "script.json"
        script.write_text(json.dumps([json.dumps(mapping, ensure_ascii=False)]),
                          encoding="utf-8")
        manifest_path = tmp_path / "manifest.json"
        manifest_path.write_text(json.dumps({"entries": [
            {"model_path": str(fixture_path("unicode.bpmn")), "status": "raw"},
        ]}))
        code, _, _ = _run(capsys, "batch", str(manifest_path), "--stage", "translate",
                          "--llm-mock-script", str(script), "--out-dir", str(tmp_path))
        assert code == EXIT_OK
        updated = json.loads(manifest_path.read_text())
        entry = updated["entries"][0]
        assert entry["status"] == "translated"
        assert "Check" in (tmp_path / "translate" / "unicode.bpmn").read_text(
            encoding="utf-8")


class TestConfigPrecedence:
    def test_env_overrides_config_file(self, capsys, tmp_path, monkeypatch):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"llm_endpoint": "http://file.invalid",
                                      "llm_model": "file-model"}))
        monkeypatch.setenv("BPMNKIT_LLM_ENDPOINT", "http://env.invalid")
        from bpmnkit.cli import build_parser, resolve_config

        args = build_parser().parse_args(
            ["describe", "x.bpmn", "-o", "y.txt", "--config", str(config)])
        settings = resolve_config(args)
        assert settings["llm_endpoint"] == "http://env.invalid"
        assert settings["llm_model"] == "file-model"

    def test_flag_overrides_env(self, monkeypatch):
        monkeypatch.setenv("BPMNKIT_LLM_ENDPOINT", "http://env.invalid")
        from bpmnkit.cli import build_parser, resolve_config

        args = build_parser().parse_args(
            ["describe", "x.bpmn", "-o", "y.txt", "--llm-endpoint", "http://flag.invalid"])
        settings = resolve_config(args)
        assert settings["llm_endpoint"] == "http://flag.invalid"
