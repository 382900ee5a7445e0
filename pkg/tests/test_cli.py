import pytest

from fairfed import __version__
from fairfed.cli import EXIT_ACCEPTANCE, EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, build_parser, main
from fairfed.presets import PRESETS, PresetReport, Check


class TestParser:

    def test_version(self, capsys):
        with pytest.raises(SystemExit) as info:
            build_parser().parse_args(["--version"])
        assert info.value.code == 0
        assert __version__ in capsys.readouterr().out

    def test_verbosity_is_exclusive(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["-v", "-q", "validate", "--config", "x.json"])

    def test_command_required(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args([])

    def test_summarize_input(self):
        assert build_parser().parse_args(["summarize", "--in", "out"]).directory == "out"


class TestMain:

    def test_validate_writes_nothing(self, small_document, write_config, tmp_path, capsys):
        path = write_config(small_document)
        before = sorted(tmp_path.iterdir())
        assert main(["validate", "--config", str(path)]) == EXIT_OK
        assert "valid" in capsys.readouterr().out
        assert sorted(tmp_path.iterdir()) == before

    def test_invalid_config(self, small_document, write_config, capsys):
        path = write_config(dict(small_document, clients_per_round=0))
        assert main(["validate", "--config", str(path)]) == EXIT_CONFIG
        assert "clients_per_round" in capsys.readouterr().err

    def test_missing_config(self, tmp_path):
        assert main(["run", "--config", str(tmp_path / "absent.json")]) == EXIT_CONFIG

    def test_run_and_summarize(self, small_document, write_config, tmp_path, capsys):
        out = tmp_path / "out"
        args = ["-q", "run", "--config", str(write_config(small_document)), "--out", str(out), "--replicates", "2"]
        assert main(args) == EXIT_OK
        assert (out / "rep001" / "metrics_log.csv").exists()
        assert "±" in capsys.readouterr().out
        assert main(["-q", "summarize", "--in", str(out)]) == EXIT_OK
        assert "vanilla" in capsys.readouterr().out

    def test_seed_override(self, small_document, write_config, tmp_path):
        path = write_config(small_document)
        main(["-q", "run", "--config", str(path), "--out", str(tmp_path / "a"), "--seed", "4"])
        main(["-q", "run", "--config", str(path), "--out", str(tmp_path / "b"), "--seed", "5"])
        assert '"seed": 4' in (tmp_path / "a" / "config_used.json").read_text()
        first = (tmp_path / "a" / "metrics_log.csv").read_bytes()
        assert first != (tmp_path / "b" / "metrics_log.csv").read_bytes()

    def test_summarize_empty_directory(self, tmp_path):
        assert main(["summarize", "--in", str(tmp_path)]) == EXIT_CONFIG

    def test_runtime_failure(self, small_document, write_config, tmp_path):
        blocker = tmp_path / "blocker"
        blocker.write_text("not a directory", encoding="utf-8")
        args = ["-q", "run", "--config", str(write_config(small_document)), "--out", str(blocker / "out")]
        assert main(args) == EXIT_RUNTIME

    def test_preset_list(self, capsys):
        assert main(["preset", "--list"]) == EXIT_OK
        out = capsys.readouterr().out
        assert all(name in out for name in PRESETS)

    def test_unknown_preset(self, capsys):
        assert main(["preset", "no_such_preset"]) == EXIT_CONFIG
        assert "table2_comparison" in capsys.readouterr().err

    def test_preset_name_required(self):
        assert main(["preset"]) == EXIT_CONFIG

    def test_failed_checks_exit_code(self, monkeypatch, tmp_path):
        failing = PresetReport("lemma2_parity", 0, [Check("frequencies_equalized", False, "3/20")])
        monkeypatch.setattr("fairfed.cli.run_preset", lambda *args: failing)
        assert main(["-q", "preset", "lemma2_parity", "--out", str(tmp_path)]) == EXIT_ACCEPTANCE
