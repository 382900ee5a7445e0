import json
import time

import numpy as np
import pytest

from fairfed import presets
from fairfed.config import ExperimentConfig
from fairfed.engine import run_replicates
from fairfed.errors import AcceptanceError, ConfigError
from fairfed.presets import (PRESETS, Check, PresetReport, ScenarioPreset, _share_check, drifting_population,
                             get_preset, run_preset)


class TestShareCheck:

    @pytest.mark.parametrize("flags, fraction, passed", [
        ([True] * 9 + [False], 0.9, True),
        ([True] * 8 + [False] * 2, 0.9, False),
        ([True] * 19 + [False], 0.95, True),
        ([True, True, True, False], 0.75, True),
        ([True, True, False, False], 0.75, False),
        ([True, True], 1.0, True),
    ])
    def test_threshold(self, flags, fraction, passed):
        check = _share_check("share", flags, fraction, "event")
        assert check.passed is passed

    def test_detail(self):
        check = _share_check("share", [True, False, True], 0.5, "event")
        assert check.detail == "event in 2/3 (need 2)"


class TestPresetReport:

    def report(self, *passed):
        return PresetReport("demo", 7, [Check(f"check_{i}", flag, "detail") for i, flag in enumerate(passed)])

    def test_passed(self):
        report = self.report(True, True)
        assert report.passed and report.failed == []
        report.raise_for_failures()
        assert report.format().startswith("Preset demo (seed 7): PASSED")

    def test_failed(self):
        report = self.report(True, False)
        assert report.failed == ["check_1"]
        assert "[FAIL] check_1: detail" in report.format()
        with pytest.raises(AcceptanceError) as info:
            report.raise_for_failures()
        assert info.value.failed == ["check_1"]

    def test_write(self, tmp_path):
        path = self.report(False).write(tmp_path / "report.json")
        document = json.loads(path.read_text(encoding="utf-8"))
        assert document == {
            "preset": "demo",
            "seed": 7,
            "passed": False,
            "checks": [{"name": "check_0", "passed": False, "detail": "detail"}],
        }


class TestRegistry:

    def test_unknown_name(self):
        with pytest.raises(ConfigError) as info:
            get_preset("table3")
        assert info.value.field == "preset"

    @pytest.mark.parametrize("name", sorted(PRESETS))
    def test_documents_parse(self, name):
        preset = get_preset(name)
        assert preset.name == name and preset.description
        assert isinstance(preset.config(), ExperimentConfig)

    def test_run_writes_report(self, small_document, tmp_path, monkeypatch):
        def checks(config, results):
            return [Check("rounds_logged", len(results[0].rows) == 2 * config.rounds, "rows per round")]

        monkeypatch.setitem(PRESETS, "tiny", ScenarioPreset("tiny", "A tiny run.", small_document, checks))
        report = run_preset("tiny", seed=11, out_dir=tmp_path)
        assert report.passed and report.seed == 11
        assert report.directory == tmp_path
        assert json.loads((tmp_path / "report.json").read_text())["passed"] is True
        assert (tmp_path / "metrics_log.csv").exists()

    def test_same_seed_same_report(self, small_document, tmp_path, monkeypatch):
        def checks(config, results):
            return [Check("final_gini", True, f"{results[0].final('fair').gini:.6f}")]

        monkeypatch.setitem(PRESETS, "tiny", ScenarioPreset("tiny", "A tiny run.", small_document, checks))
        run_preset("tiny", out_dir=tmp_path / "a")
        run_preset("tiny", out_dir=tmp_path / "b")
        assert (tmp_path / "a" / "report.json").read_bytes() == (tmp_path / "b" / "report.json").read_bytes()


class TestDriftingPopulation:

    def test_ramps(self):
        model = drifting_population(4, 0.4)
        np.testing.assert_allclose(model.mean_at(100), [0.3, 0.3, 0.7, 0.7])
        np.testing.assert_allclose(model.mean_at(300), [0.5, 0.5, 0.5, 0.5])
        np.testing.assert_allclose(model.mean_at(500), [0.7, 0.7, 0.3, 0.3])

    def test_odd_population(self):
        model = drifting_population(5, 0.2)
        np.testing.assert_allclose(model.mean_at(1), [0.4, 0.4, 0.6, 0.6, 0.6])


class TestLimitChecks:

    def test_zero_lambda_uses_estimated_availabilities(self, monkeypatch):
        monkeypatch.setattr(presets, "LIMIT_SEEDS", 2)
        checks = presets._limit_checks(PRESETS["theorem2_limits"].config(), [])
        assert [check.name for check in checks] == [
            "true_pi_limit_lambda_0.7",
            "estimated_pi_limit_lambda_0",
            "estimated_pi_limit_lambda_0.7",
        ]
        assert all(check.detail.endswith("(need 2)") for check in checks)


class TestTrendChecks:

    def test_arms_compared_at_round_100_and_at_the_end(self, small_document):
        config = ExperimentConfig.from_dict(dict(small_document, rounds=120, replicates=3))
        checks = presets._trend_checks(config, run_replicates(config))
        names = [check.name for check in checks]
        assert names[:4] == ["fair_variance_below_vanilla_at_100", "sign_test_at_100",
                             "fair_variance_below_vanilla", "sign_test"]
        assert "mean V_100 " in checks[0].detail and "mean V_120 " in checks[2].detail

    def test_short_runs_skip_round_100(self, small_document):
        config = ExperimentConfig.from_dict(dict(small_document, replicates=2))
        names = [check.name for check in presets._trend_checks(config, run_replicates(config))]
        assert "sign_test_at_100" not in names


@pytest.mark.slow
class TestAcceptance:

    @pytest.mark.parametrize("name", [
        "lemma1_convergence",
        "lemma2_parity",
        "theorem2_limits",
        "appendix_a_identity",
        "appendix_c_drift",
        "surrogate_bounds",
        "table2_comparison",
        "figs34_trend",
    ])
    def test_preset_passes(self, name, tmp_path):
        report = run_preset(name, out_dir=tmp_path)
        assert report.passed, report.format()

    def test_parity_preset_runs_within_budget(self, tmp_path):
        started = time.perf_counter()
        run_preset("lemma2_parity", out_dir=tmp_path)
        assert time.perf_counter() - started < 30.0
