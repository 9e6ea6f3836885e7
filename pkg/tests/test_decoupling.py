"""Splitting records across tables and the three read routes."""

import pytest

from fedtx import (
    AtomicityScopeViolation,
    AtomicityUnit,
    ConditionalWrite,
    DecoupleConfig,
    JoinIntegrityError,
    Record,
    TxState,
    if_tx_id_equals,
)
from fedtx.decoupling import (
    ReadPath,
    decouple,
    expand_writes,
    read_dispatch,
    read_split,
    read_split_snapshot,
    read_split_view,
    write_batch,
)
from fedtx.model import TransactionMetadata
from fedtx.records import combined_columns, metadata_columns
from conftest import build_env, k, make_caps

CFG = DecoupleConfig()


def committed_meta(tx_id="t0", version=1):
    return TransactionMetadata(
        tx_id, version, TxState.COMMITTED, prepared_at=1, committed_at=2
    )


class TestLocator:
    def test_metadata_key_suffixes_table(self):
        meta_key = CFG.metadata_key(k())
        assert meta_key.table == "t_meta"
        assert (meta_key.partition_key, meta_key.clustering_key) == (
            k().partition_key,
            k().clustering_key,
        )

    def test_locator_is_injective(self):
        with pytest.raises(ValueError):
            CFG.metadata_key(k(table="t_meta"))

    def test_inverse(self):
        assert CFG.application_key(CFG.metadata_key(k())) == k()

    def test_namespace_filter(self):
        cfg = DecoupleConfig(namespaces=frozenset({"other"}))
        assert not cfg.applies_to(k())


class TestDecouple:
    def test_column_partition(self):
        record = Record(k(), combined_columns({"v": 7}, committed_meta()))
        (app,), (meta,) = decouple(CFG, [record])
        assert app == (k(), {"v": 7})
        assert meta[0].table == "t_meta"
        assert meta[1] == metadata_columns(committed_meta())

    def test_round_trip(self):
        columns = combined_columns({"v": 7, "w": b"x"}, committed_meta())
        record = Record(k(), columns)
        (app_key, app), (meta_key, meta) = [x[0] for x in decouple(CFG, [record])]
        rejoined = dict(app)
        rejoined.update(meta)
        assert rejoined == dict(columns)

    def test_empty(self):
        assert decouple(CFG, []) == ([], [])


class TestExpandWrites:
    def test_one_logical_write_becomes_two_physical(self):
        env = build_env(decoupled=True)
        logical = ConditionalWrite(
            k(), combined_columns({"v": 1}, committed_meta()), if_tx_id_equals("t9")
        )
        physical = expand_writes(env.registry, env.manager.decoupling, [logical])
        assert len(physical) == 2
        app, meta = physical
        assert app.key.table == "t" and app.condition.kind.name == "UNCONDITIONAL"
        assert meta.key.table == "t_meta" and meta.condition.expected_tx_id == "t9"

    def test_single_batch_of_two_rows(self):
        env = build_env(decoupled=True)
        logical = ConditionalWrite(k(), combined_columns({"v": 1}, committed_meta()))
        assert write_batch(env.registry, env.manager.decoupling, [logical]) is None
        counters = env.counters("s1")
        assert counters.atomic_write_batches == 1
        assert counters.written_records == 2

    def test_four_logical_writes_one_batch_of_eight(self):
        env = build_env(decoupled=True)
        batch = [
            ConditionalWrite(k(pk=i), combined_columns({"v": i}, committed_meta()))
            for i in range(4)
        ]
        assert write_batch(env.registry, env.manager.decoupling, batch) is None
        counters = env.counters("s1")
        assert (counters.atomic_write_batches, counters.written_records) == (1, 8)

    def test_failed_metadata_condition_suppresses_application_write(self):
        env = build_env(decoupled=True)
        first = ConditionalWrite(k(), combined_columns({"v": 1}, committed_meta("t0")))
        assert write_batch(env.registry, env.manager.decoupling, [first]) is None
        stale = ConditionalWrite(
            k(), combined_columns({"v": 2}, committed_meta("t1", 2)), if_tx_id_equals("wrong")
        )
        failed = write_batch(env.registry, env.manager.decoupling, [stale])
        assert failed is not None
        assert env.registry.read(k()).columns == {"v": 1}

    def test_colocation_violation(self):
        env = build_env({"s1": make_caps(AtomicityUnit.TABLE)}, decoupled=True)
        logical = ConditionalWrite(k(), combined_columns({"v": 1}, committed_meta()))
        with pytest.raises(AtomicityScopeViolation):
            expand_writes(env.registry, env.manager.decoupling, [logical])


def seeded_env(consistent=False, view=False):
    env = build_env(
        {"s1": make_caps(consistent=consistent, view=view)},
        decoupled=True,
        register_views=view,
    )
    logical = ConditionalWrite(k(), combined_columns({"v": 7}, committed_meta()))
    write_batch(env.registry, env.manager.decoupling, [logical])
    return env


class TestReadRoutes:
    def test_dispatch_prefers_view(self):
        env = seeded_env(consistent=True, view=True)
        result = read_dispatch(env.registry, env.manager.decoupling, k())
        assert result.path is ReadPath.VIEW

    def test_dispatch_uses_snapshot_without_view(self):
        env = seeded_env(consistent=True)
        result = read_dispatch(env.registry, env.manager.decoupling, k())
        assert result.path is ReadPath.SNAPSHOT

    def test_dispatch_falls_back_to_split_reads(self):
        env = seeded_env()
        result = read_dispatch(env.registry, env.manager.decoupling, k())
        assert result.path is ReadPath.SPLIT_READS
        assert not result.path.consistent

    def test_dispatch_plain_when_disabled(self):
        env = build_env()
        tx = env.manager.begin()
        tx.put(k(), {"v": 7})
        tx.commit()
        result = read_dispatch(env.registry, None, k())
        assert result.path is ReadPath.COLOCATED
        assert result.app_columns == {"v": 7}

    def test_split_reads_join(self):
        env = seeded_env()
        result = read_split(env.registry, env.manager.decoupling, k())
        assert result.app_columns == {"v": 7}
        assert result.meta == committed_meta()

    def test_both_absent(self):
        env = seeded_env()
        result = read_split(env.registry, env.manager.decoupling, k(pk=99))
        assert result.app_columns is None and result.meta is None

    def test_one_sided_pair_is_an_error(self):
        env = seeded_env()
        env.adapter("s1").atomic_write(
            [ConditionalWrite(k(pk=2), {"v": 1})]
        )  # simulated external interference: application row only
        with pytest.raises(JoinIntegrityError):
            read_split(env.registry, env.manager.decoupling, k(pk=2))

    def test_routes_agree_on_quiescent_store(self):
        env = seeded_env(consistent=True, view=True)
        cfg = env.manager.decoupling
        split = read_split(env.registry, cfg, k())
        snapshot = read_split_snapshot(env.registry, cfg, k())
        view = read_split_view(env.registry, cfg, k())
        assert split.app_columns == snapshot.app_columns == view.app_columns
        assert split.meta == snapshot.meta == view.meta

    def test_snapshot_counts_one_db_transaction(self):
        env = seeded_env(consistent=True)
        env.adapter("s1").reset_counters()
        read_split_snapshot(env.registry, env.manager.decoupling, k())
        counters = env.counters("s1")
        assert (counters.db_transactions, counters.reads) == (1, 2)

    def test_view_counts_one_read(self):
        env = seeded_env(consistent=True, view=True)
        env.adapter("s1").reset_counters()
        read_split_view(env.registry, env.manager.decoupling, k())
        counters = env.counters("s1")
        assert (counters.reads, counters.view_reads, counters.db_transactions) == (1, 1, 0)
