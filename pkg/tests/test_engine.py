import csv
import json
import logging

import numpy as np
import pytest

from fairfed.config import ENV_OUTPUT, ExperimentConfig
from fairfed.engine import (CLIENT_HEADER, Simulation, collect_logs, format_summary_table, read_metrics_log, run,
                            run_replicates, summarize, write_metrics_log)
from fairfed.errors import UndefinedInputError
from fairfed.metrics import CSV_HEADER, utility_cv
from fairfed.selection import PolicyKind
from fairfed.toyfl import verify_descent_bounds


@pytest.fixture
def config(small_document):
    return ExperimentConfig.from_dict(small_document)


class TestSimulation:

    def test_deterministic(self, config):
        first = Simulation(config).run()
        second = Simulation(config).run()
        assert first.rows == second.rows
        assert [r.chosen for r in first.records] == [r.chosen for r in second.records]

    def test_seed_changes_the_run(self, config):
        assert Simulation(config, seed=1).run().rows != Simulation(config, seed=2).run().rows

    def test_vanilla_samples_uniformly(self, config):
        simulation = Simulation(config)
        assert simulation.arms["vanilla"].policy.kind is PolicyKind.RANDOM
        assert simulation.arms["fair"].policy.kind is PolicyKind.REACTIVE_REWEIGHT

    def test_chosen_clients_are_available(self, config):
        simulation = Simulation(config)
        masks = []
        observe = simulation.observe

        def recording(t):
            available = observe(t)
            masks.append(available.copy())
            return available

        simulation.observe = recording
        result = simulation.run()
        assert len(masks) == config.rounds
        for record, available in zip(result.records, masks):
            assert record.n_available == available.sum()
            for arm in ("fair", "vanilla"):
                chosen = list(record.chosen[arm])
                assert len(chosen) == min(config.clients_per_round, available.sum())
                assert available[chosen].all()

    def test_rows_per_round(self, config):
        result = Simulation(config).run()
        assert len(result.rows) == 2 * config.rounds
        assert [row.arm for row in result.rows[:2]] == ["fair", "vanilla"]
        assert result.series("fair", "round").tolist() == list(range(1, config.rounds + 1))

    def test_single_client_is_perfectly_fair(self, small_document):
        document = dict(small_document, n_clients=1, clients_per_round=1)
        document["availability"] = {"kind": "bernoulli", "pi": [0.7]}
        result = Simulation(ExperimentConfig.from_dict(document)).run()
        for arm in ("fair", "vanilla"):
            final = result.final(arm)
            assert final.fairness_variance == 0.0
            assert final.jain_utility == 1.0
            assert final.gini == 0.0

    def test_empty_rounds_are_logged(self, small_document, caplog):
        document = dict(small_document, n_clients=2, clients_per_round=1, rounds=30)
        document["availability"] = {"kind": "bernoulli", "pi": [0.05, 0.05]}
        with caplog.at_level(logging.WARNING, logger="fairfed.engine"):
            result = Simulation(ExperimentConfig.from_dict(document)).run()
        empty = [record for record in result.records if record.n_available == 0]
        assert empty
        assert all(record.chosen["fair"] == () for record in empty)
        assert "no client available" in caplog.text

    def test_quadratic_with_surrogates(self, quadratic_document):
        config = ExperimentConfig.from_dict(quadratic_document)
        simulation = Simulation(config, record_trajectory=True)
        result = simulation.run()
        assert len(result.trajectory) > 0
        assert all(row.surrogate_contribution == 0.0 for row in result.rows if row.arm == "vanilla")
        assert any(row.surrogate_contribution > 0.0 for row in result.rows if row.arm == "fair")
        report = verify_descent_bounds(result.trajectory, simulation.arms["fair"].workload.objective,
                                       config.workload.trainer())
        assert report.gap_violations == 0

    def test_surrogate_credit_never_widens_the_spread(self, quadratic_document):
        simulation = Simulation(ExperimentConfig.from_dict(quadratic_document))
        ledger = simulation.arms["fair"].ledger
        credit = ledger.credit
        changes = []

        def recording(clients, amounts):
            pi = simulation.estimator.estimates
            before = utility_cv(ledger.utility / pi)
            credit(clients, amounts)
            changes.append(utility_cv(ledger.utility / pi) - before)

        ledger.credit = recording
        simulation.run()
        assert changes
        assert max(changes) <= 1e-12
        assert ledger.credited.sum() > 0

    def test_metrics_stride(self, small_document):
        full = Simulation(ExperimentConfig.from_dict(small_document)).run()
        strided = Simulation(ExperimentConfig.from_dict(dict(small_document, metrics_every=7))).run()
        assert [record.t for record in strided.records] == [7, 14, 21, 28, 35, 40]
        assert strided.at(14, "fair") == full.at(14, "fair")
        assert strided.final("vanilla") == full.final("vanilla")
        assert strided.clients == full.clients
        with pytest.raises(KeyError):
            strided.at(3, "fair")

    def test_true_pi_normalization(self, small_document):
        document = dict(small_document, normalization="true_pi")
        result = Simulation(ExperimentConfig.from_dict(document)).run()
        fair = [row for row in result.clients if row.arm == "fair"]
        for row in fair:
            assert row.u_norm == pytest.approx(row.u / row.pi_true)

    def test_profiled_run(self, config):
        result = run_replicates(config.with_overrides(profile=True))[0]
        assert "[observe]" in result.profile
        assert "[record]" in result.profile


class TestOutputs:

    def test_single_replicate_layout(self, config, tmp_path):
        run(config, tmp_path)
        with open(tmp_path / "metrics_log.csv", newline="") as handle:
            rows = list(csv.reader(handle))
        assert tuple(rows[0]) == CSV_HEADER
        assert len(rows) == 1 + 2 * config.rounds
        with open(tmp_path / "clients_final.csv", newline="") as handle:
            assert tuple(next(csv.reader(handle))) == CLIENT_HEADER
        assert json.loads((tmp_path / "config_used.json").read_text())["rounds"] == config.rounds
        assert not list(tmp_path.glob("*.partial"))
        assert not (tmp_path / "profile.txt").exists()

    def test_log_reads_back(self, config, tmp_path):
        results = run(config, tmp_path)
        logged = read_metrics_log(tmp_path / "metrics_log.csv")
        assert len(logged) == len(results[0].rows)
        for written, read in zip(results[0].rows, logged):
            assert read.round == written.round and read.arm == written.arm
            assert read.fairness_variance == pytest.approx(written.fairness_variance, rel=1e-5, abs=1e-12)

    def test_reruns_are_byte_identical(self, config, tmp_path):
        run(config, tmp_path / "a")
        run(config, tmp_path / "b")
        assert (tmp_path / "a" / "metrics_log.csv").read_bytes() == (tmp_path / "b" / "metrics_log.csv").read_bytes()

    def test_replicates(self, config, tmp_path):
        results = run(config.with_overrides(replicates=3), tmp_path)
        assert [result.seed for result in results] == [config.seed, config.seed + 1, config.seed + 2]
        assert sorted(p.name for p in tmp_path.glob("rep*")) == ["rep000", "rep001", "rep002"]
        with open(tmp_path / "summary.csv", newline="") as handle:
            summary = list(csv.DictReader(handle))
        assert {row["arm"] for row in summary} == {"fair", "vanilla"}
        assert all(row["replicates"] == "3" for row in summary)
        assert len(collect_logs(tmp_path)) == 3

    def test_parallel_matches_serial(self, config):
        serial = run_replicates(config.with_overrides(replicates=2), workers=1)
        parallel = run_replicates(config.with_overrides(replicates=2), workers=2)
        assert [r.rows for r in serial] == [r.rows for r in parallel]

    def test_environment_output_dir(self, config, tmp_path, monkeypatch):
        monkeypatch.setenv(ENV_OUTPUT, str(tmp_path / "env"))
        run(config)
        assert (tmp_path / "env" / "metrics_log.csv").exists()

    def test_profile_file(self, config, tmp_path):
        run(config.with_overrides(profile=True), tmp_path)
        assert "runtime" in (tmp_path / "profile.txt").read_text()

    def test_failed_write_leaves_partial(self, config, tmp_path):
        result = Simulation(config).run()
        target = tmp_path / "metrics_log.csv"
        target.mkdir()
        with pytest.raises(OSError):
            write_metrics_log(result.rows, target)
        assert (tmp_path / "metrics_log.csv.partial").exists()


class TestSummaries:

    def test_summary_statistics(self, config):
        results = run_replicates(config.with_overrides(replicates=2))
        summary = summarize([result.rows for result in results])
        cell = next(row for row in summary if row.arm == "fair" and row.metric == "gini")
        values = np.array([result.final("fair").gini for result in results])
        assert cell.mean == pytest.approx(values.mean())
        assert cell.std == pytest.approx(values.std())
        table = format_summary_table(summary)
        assert "fair" in table and "vanilla" in table and "±" in table

    def test_nothing_to_summarize(self):
        with pytest.raises(UndefinedInputError):
            summarize([])

    def test_missing_logs(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            collect_logs(tmp_path)

    def test_foreign_csv(self, tmp_path):
        path = tmp_path / "metrics_log.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(UndefinedInputError):
            read_metrics_log(path)
