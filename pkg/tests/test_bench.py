"""Workload harness: loading, counting, reporting, and determinism."""

import csv
import io

import pytest

from fedtx.bench import (
    DecouplingMode,
    Report,
    StorageSpec,
    WorkloadConfig,
    build_env,
    load_phase,
    record_key,
    run_workload,
)
from fedtx.config import parse_config
from fedtx.errors import ConfigError


def config(**overrides):
    base = dict(
        workload="F",
        ops_per_tx=4,
        record_count=50,
        payload_bytes=16,
        duration_ops=10,
        seed=11,
        storages=(StorageSpec("db1"),),
        label="test",
    )
    base.update(overrides)
    return WorkloadConfig(**base)


class TestConfigValidation:
    def test_unknown_workload(self):
        with pytest.raises(ConfigError):
            config(workload="Z")

    def test_record_count_must_cover_ops(self):
        with pytest.raises(ConfigError):
            config(record_count=3, ops_per_tx=4)

    def test_mode_requires_capability(self):
        with pytest.raises(ConfigError):
            build_env(
                config(
                    decoupling=DecouplingMode.CONSISTENT_READABLE,
                    storages=(StorageSpec("db1", consistent_readable=False),),
                )
            )


class TestLoadPhase:
    def test_loads_requested_records(self):
        env = build_env(config(record_count=100))
        loaded = load_phase(env)
        assert loaded == {"db1": 100}
        tx = env.manager.begin()
        assert all(tx.get(record_key("db1", i)) is not None for i in range(100))

    def test_payload_width(self):
        env = build_env(config(payload_bytes=128))
        load_phase(env)
        tx = env.manager.begin()
        assert len(tx.get(record_key("db1", 0))["payload"]) == 128

    def test_reload_is_idempotent(self):
        env = build_env(config(record_count=20))
        load_phase(env)
        load_phase(env)
        dump = env.adapters["db1"].dump()
        assert len(dump) == 20
        assert all(r.columns["_tx_version"] == 1 for r in dump)

    def test_counters_reset_after_load(self):
        env = build_env(config())
        load_phase(env)
        assert env.adapters["db1"].counters().atomic_write_batches == 0


class TestRunWorkload:
    def test_rmw_counts(self):
        env = build_env(config(duration_ops=10, ops_per_tx=4))
        load_phase(env)
        report = run_workload(env)
        assert report.committed == 10
        totals = report.totals()
        assert totals.reads == 40
        assert totals.written_records == 40  # one-phase: one committed image each

    def test_read_only_counts(self):
        env = build_env(config(workload="C", duration_ops=10, ops_per_tx=4))
        load_phase(env)
        report = run_workload(env)
        assert report.totals().reads == 40
        assert report.totals().written_records == 0

    def test_conservation_under_contention(self):
        cfg = config(
            duration_ops=30,
            ops_per_tx=2,
            record_count=2,
            threads=4,
            retry_limit=50,
        )
        env = build_env(cfg)
        load_phase(env)
        report = run_workload(env)
        assert report.committed + report.gave_up == 30

    def test_single_thread_reports_are_deterministic(self):
        results = []
        for _ in range(2):
            env = build_env(config(duration_ops=15, seed=99))
            load_phase(env)
            report = run_workload(env)
            results.append(
                (report.committed, report.aborted, report.gave_up, report.totals())
            )
        assert results[0] == results[1]


class TestReport:
    def test_empty_run_renders_zeroed_row(self):
        report = Report(label="empty")
        row = report.render_csv().splitlines()[1].split(",")
        assert row == ["empty", "0", "0", "0", "0", "0", "0", "0", "0", "0"]

    def test_csv_round_trips(self):
        env = build_env(config(duration_ops=5))
        load_phase(env)
        report = run_workload(env)
        parsed = list(csv.DictReader(io.StringIO(report.render_csv())))
        assert len(parsed) == 1
        row = parsed[0]
        assert row["config"] == "test"
        assert int(row["committed"]) == 5
        assert int(row["reads"]) == report.totals().reads

    def test_csv_header_is_fixed(self):
        assert Report.CSV_HEADER == (
            "config,committed,aborted,reads,scans,batches,"
            "writtenRecords,dbTransactions,p50us,p99us"
        )

    def test_text_report_matches_counters(self):
        env = build_env(config(duration_ops=5))
        load_phase(env)
        report = run_workload(env)
        text = report.render_text()
        counters = env.adapters["db1"].counters()
        assert f"db1.reads={counters.reads}" in text
        assert f"committed=5" in text


class TestConfigFile:
    def test_full_file(self, tmp_path):
        path = tmp_path / "bench.ini"
        path.write_text(
            """
[bench]
workload = C
ops_per_tx = 2
record_count = 10
payload_bytes = 8
threads = 2
duration_ops = 5
seed = 7
aup_enabled = false
one_phase_enabled = false
decoupling = view_joinable
serializable = true
label = sample

[storage.alpha]
atomicity_unit = PARTITION
consistent_readable = true
view_joinable = true

[storage.beta]

[coordinator]
storage = gamma
"""
        )
        cfg = parse_config(path)
        assert cfg.workload == "C"
        assert cfg.threads == 2
        assert cfg.aup_enabled is False
        assert cfg.decoupling is DecouplingMode.VIEW_JOINABLE
        assert cfg.serializable is True
        assert [s.name for s in cfg.storages] == ["alpha", "beta"]
        assert cfg.storages[0].atomicity_unit.name == "PARTITION"
        assert cfg.coordinator.storage == "gamma"
        assert cfg.label == "sample"

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            parse_config(tmp_path / "nope.ini")

    def test_no_storages(self, tmp_path):
        path = tmp_path / "bench.ini"
        path.write_text("[bench]\nworkload = F\n")
        with pytest.raises(ConfigError):
            parse_config(path)

    def test_bad_unit(self, tmp_path):
        path = tmp_path / "bench.ini"
        path.write_text("[storage.a]\natomicity_unit = GALAXY\n")
        with pytest.raises(ConfigError):
            parse_config(path)

    def test_bad_boolean(self, tmp_path):
        path = tmp_path / "bench.ini"
        path.write_text("[bench]\naup_enabled = maybe\n\n[storage.a]\n")
        with pytest.raises(ConfigError):
            parse_config(path)

    def test_config_runs_end_to_end(self, tmp_path):
        path = tmp_path / "bench.ini"
        path.write_text(
            """
[bench]
workload = F
ops_per_tx = 2
record_count = 10
duration_ops = 5
payload_bytes = 8

[storage.db1]
"""
        )
        cfg = parse_config(path)
        env = build_env(cfg)
        load_phase(env)
        report = run_workload(env)
        assert report.committed == 5
